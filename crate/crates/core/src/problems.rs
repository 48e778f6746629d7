//! Synthetic ground-truth operators, input laws and bounded noise laws, and
//! dataset generation `v_i = Ψ(u_i) + ε_i`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{trig_frequency, BasisEncoder, BasisKind, BasisSpec};
use crate::eigen::symmetric_eigen;
use crate::error::{check_len, Error, Result};
use crate::quadrature::{self, norm, squared_distance, GridFunction, QuadratureGrid};
use crate::train::{Dataset, DatasetMeta};

/// Energy outside an operator's mode span above which inputs are rejected.
pub const SPAN_TOL: f64 = 1e-8;

/// Scalar maps `R^{d_0} → R` used for manifold charts and multi-index links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarMap {
    /// `amplitude · sin(frequency · Σ_j z_j + phase)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · tanh(scale · Σ_j z_j)`.
    Tanh { amplitude: f64, scale: f64 },
    /// `constant + Σ_j linear_j z_j + Σ_j quadratic_j z_j²`.
    Quadratic {
        #[serde(default)]
        constant: f64,
        linear: Vec<f64>,
        quadratic: Vec<f64>,
    },
}

impl ScalarMap {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            ScalarMap::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * z.iter().sum::<f64>() + phase).sin(),
            ScalarMap::Tanh { amplitude, scale } => amplitude * (scale * z.iter().sum::<f64>()).tanh(),
            ScalarMap::Quadratic {
                constant,
                linear,
                quadratic,
            } => {
                let mut v = *constant;
                for (j, &zj) in z.iter().enumerate() {
                    v += linear.get(j).copied().unwrap_or(0.0) * zj;
                    v += quadratic.get(j).copied().unwrap_or(0.0) * zj * zj;
                }
                v
            }
        }
    }

    /// Global Lipschitz constant; `None` for maps that are not globally
    /// Lipschitz.
    pub fn lipschitz(&self, d0: usize) -> Option<f64> {
        let root = (d0 as f64).sqrt();
        match self {
            ScalarMap::Sine {
                amplitude, frequency, ..
            } => Some((amplitude * frequency).abs() * root),
            ScalarMap::Tanh { amplitude, scale } => Some((amplitude * scale).abs() * root),
            ScalarMap::Quadratic { linear, quadratic, .. } => {
                if quadratic.iter().all(|&q| q == 0.0) {
                    Some(linear.iter().map(|l| l * l).sum::<f64>().sqrt())
                } else {
                    None
                }
            }
        }
    }

    /// Bound on `|g(z)|` over the box `[−b, b]^{d0}`.
    pub fn sup_on_box(&self, b: f64, d0: usize) -> f64 {
        match self {
            ScalarMap::Sine { amplitude, .. } => amplitude.abs(),
            ScalarMap::Tanh { amplitude, .. } => amplitude.abs(),
            ScalarMap::Quadratic {
                constant,
                linear,
                quadratic,
            } => {
                constant.abs()
                    + linear.iter().take(d0).map(|l| l.abs() * b).sum::<f64>()
                    + quadratic.iter().take(d0).map(|q| q.abs() * b * b).sum::<f64>()
            }
        }
    }
}

/// Ground-truth operator Ψ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Periodic heat flow for time `time`: trig mode with frequency vector
    /// `f` is multiplied by `exp(−π² |f|² t)`.
    HeatSemigroup { time: f64, mode_cap: usize },
    /// Circular shift `u(x) ↦ u(x − s)` along every axis.
    Shift { shift: f64, mode_cap: usize },
    /// `Ψ(u) = Σ_{k ≤ d_Y} g_k(V_kᵀ a_u) T_k` with `a_u` the first `d_X`
    /// trig coefficients of `u` (one-dimensional domain).
    MultiIndexTrig {
        d_x: usize,
        d_y: usize,
        d0: usize,
        /// `V_k`, each row-major `d_X × d_0`.
        projections: Vec<Vec<f64>>,
        maps: Vec<ScalarMap>,
    },
}

impl OperatorSpec {
    pub fn id(&self) -> &'static str {
        match self {
            OperatorSpec::HeatSemigroup { .. } => "heat_semigroup",
            OperatorSpec::Shift { .. } => "shift",
            OperatorSpec::MultiIndexTrig { .. } => "multi_index_trig",
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            OperatorSpec::HeatSemigroup { time, mode_cap } => {
                if !(*time >= 0.0) || *mode_cap == 0 {
                    return Err(Error::config("heat semigroup needs time >= 0 and mode_cap >= 1"));
                }
            }
            OperatorSpec::Shift { shift, mode_cap } => {
                if !(-1.0..=1.0).contains(shift) {
                    return Err(Error::config("shift must lie in [-1, 1]"));
                }
                if *mode_cap == 0 || mode_cap % 2 == 0 {
                    return Err(Error::config(
                        "shift needs an odd mode_cap so every sine has its cosine partner",
                    ));
                }
            }
            OperatorSpec::MultiIndexTrig {
                d_x,
                d_y,
                d0,
                projections,
                maps,
            } => {
                if dim != 1 {
                    return Err(Error::config("multi-index operator is defined on [-1, 1] only"));
                }
                if *d0 == 0 || *d_x == 0 || *d_y == 0 {
                    return Err(Error::config("multi-index dims must be positive"));
                }
                check_len("multi-index projections", *d_y, projections.len())?;
                check_len("multi-index maps", *d_y, maps.len())?;
                for v in projections {
                    check_len("multi-index projection entries", d_x * d0, v.len())?;
                }
                if maps.iter().any(|g| g.lipschitz(*d0).is_none()) {
                    return Err(Error::config(
                        "multi-index maps must be globally Lipschitz (sine or tanh)",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Trig spec of the input span the operator acts on.
    pub fn input_span(&self, dim: usize) -> Result<BasisSpec> {
        match *self {
            OperatorSpec::HeatSemigroup { mode_cap, .. } | OperatorSpec::Shift { mode_cap, .. } => {
                BasisSpec::new(BasisKind::Trigonometric, dim, mode_cap)
            }
            OperatorSpec::MultiIndexTrig { d_x, .. } => BasisSpec::new(BasisKind::Trigonometric, 1, d_x),
        }
    }

    /// Trig spec containing every output.
    pub fn output_span(&self, dim: usize) -> Result<BasisSpec> {
        match *self {
            OperatorSpec::MultiIndexTrig { d_y, .. } => BasisSpec::new(BasisKind::Trigonometric, 1, d_y),
            _ => self.input_span(dim),
        }
    }

    /// Whether Ψ is linear (so the encoded map is a matrix).
    pub fn is_linear(&self) -> bool {
        !matches!(self, OperatorSpec::MultiIndexTrig { .. })
    }
}

/// Analytic Lipschitz constant `L_Ψ`.
///
/// Heat: the largest multiplier over the span, which is 1 for the constant
/// mode. Shift: 1 (rotation). Multi-index: `(Σ_k L_{g_k}² ‖V_k‖²)^{1/2}`.
pub fn operator_lipschitz_constant(spec: &OperatorSpec) -> Result<f64> {
    match spec {
        OperatorSpec::HeatSemigroup { time, .. } => {
            // multipliers exp(-π²|f|²t) over all frequencies present, f = 0 included
            let _ = time;
            Ok(1.0)
        }
        OperatorSpec::Shift { .. } => Ok(1.0),
        OperatorSpec::MultiIndexTrig {
            d_x,
            d0,
            projections,
            maps,
            ..
        } => {
            let mut acc = 0.0;
            for (v, g) in projections.iter().zip(maps) {
                let lg = g
                    .lipschitz(*d0)
                    .ok_or_else(|| Error::config("map is not globally Lipschitz"))?;
                let op = operator_norm(v, *d_x, *d0)?;
                acc += lg * lg * op * op;
            }
            Ok(acc.sqrt())
        }
    }
}

/// Spectral norm of a row-major `rows × cols` matrix.
pub fn operator_norm(v: &[f64], rows: usize, cols: usize) -> Result<f64> {
    check_len("matrix entries", rows * cols, v.len())?;
    let mut gram = vec![0.0; cols * cols];
    for row in v.chunks(cols) {
        for i in 0..cols {
            for j in 0..cols {
                gram[i * cols + j] += row[i] * row[j];
            }
        }
    }
    let e = symmetric_eigen(&gram, cols)?;
    Ok(e.values[0].max(0.0).sqrt())
}

/// An operator bound to a grid, with its trig encoders tabulated.
#[derive(Debug, Clone)]
pub struct Operator {
    spec: OperatorSpec,
    input: BasisEncoder,
    output: BasisEncoder,
}

impl Operator {
    pub fn new(spec: OperatorSpec, grid: &Arc<QuadratureGrid>) -> Result<Self> {
        spec.validate(grid.dim())?;
        let input = spec.input_span(grid.dim())?.encoder(grid)?;
        let output = spec.output_span(grid.dim())?.encoder(grid)?;
        Ok(Operator { spec, input, output })
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn lipschitz(&self) -> Result<f64> {
        operator_lipschitz_constant(&self.spec)
    }

    /// Encoded action on the input span's coefficients.
    pub fn apply_coefficients(&self, a: &[f64]) -> Result<Vec<f64>> {
        check_len("operator coefficients", self.input.encode_dim(), a.len())?;
        let span = self.input.spec();
        match &self.spec {
            OperatorSpec::HeatSemigroup { time, .. } => Ok(a
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    let f2: usize = span.multi_index(j).iter().map(|&k| trig_frequency(k).pow(2)).sum();
                    c * (-(PI * PI) * f2 as f64 * time).exp()
                })
                .collect()),
            OperatorSpec::Shift { shift, .. } => Ok(shift_coefficients(a, span, *shift)),
            OperatorSpec::MultiIndexTrig {
                d_x,
                d0,
                projections,
                maps,
                ..
            } => Ok(projections
                .iter()
                .zip(maps)
                .map(|(v, g)| {
                    let mut z = vec![0.0; *d0];
                    for (row, &ai) in v.chunks(*d0).zip(a.iter().take(*d_x)) {
                        for (zj, &vij) in z.iter_mut().zip(row) {
                            *zj += vij * ai;
                        }
                    }
                    g.eval(&z)
                })
                .collect()),
        }
    }

    /// Coefficients of `u` in the input span, rejecting energy outside it.
    pub fn encode_input(&self, u: &GridFunction) -> Result<Vec<f64>> {
        let a = self.input.encode(u)?;
        let back = self.input.decode(&a)?;
        let outside = squared_distance(u, &back)?;
        if outside > SPAN_TOL {
            return Err(Error::OutOfSpan { energy: outside });
        }
        Ok(a)
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        let a = self.encode_input(u)?;
        let b = self.apply_coefficients(&a)?;
        self.output.decode(&b)
    }

    /// Matrix `A` (row-major `d_Y × d_X`) with `E_Y Ψ(D_X a) = A a`, for
    /// linear operators and trig encoders.
    pub fn encoded_linear_map(&self, x: &BasisEncoder, y: &BasisEncoder) -> Result<Vec<f64>> {
        if !self.spec.is_linear() {
            return Err(Error::config("encoded linear map requires a linear operator"));
        }
        let dx = x.encode_dim();
        let dy = y.encode_dim();
        let mut a = vec![0.0; dy * dx];
        for j in 0..dx {
            let col = y.encode(&self.apply(&x.basis_function(j))?)?;
            for (i, v) in col.into_iter().enumerate() {
                a[i * dx + j] = v;
            }
        }
        Ok(a)
    }
}

fn shift_coefficients(a: &[f64], span: &BasisSpec, s: f64) -> Vec<f64> {
    let r = span.order;
    let mut out = a.to_vec();
    let stride_of = |axis: usize| r.pow((span.dim - 1 - axis) as u32);
    for axis in 0..span.dim {
        let stride = stride_of(axis);
        let src = out.clone();
        for j in 0..a.len() {
            let k = span.multi_index(j)[axis];
            if k < 2 {
                continue;
            }
            let f = trig_frequency(k) as f64;
            let (sn, c) = (f * PI * s).sin_cos();
            if k.is_multiple_of(2) {
                // sine slot, cosine partner one index up
                let partner = j + stride;
                out[j] = src[j] * c + src[partner] * sn;
            } else {
                let partner = j - stride;
                out[j] = -src[partner] * sn + src[j] * c;
            }
        }
    }
    out
}

pub fn apply_operator(spec: &OperatorSpec, u: &GridFunction) -> Result<GridFunction> {
    Operator::new(spec.clone(), u.grid())?.apply(u)
}

/// Input measure γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputLaw {
    /// `a_j = A ξ_j ρ_j^{−β}` with `ξ_j ~ U[−1,1]` and `ρ_j` the decay rank
    /// (1 + total degree) of basis function `j`.
    CoefficientDecay {
        basis: BasisKind,
        order: usize,
        amplitude: f64,
        decay: f64,
    },
    /// Trig coefficients on a `d_0`-dimensional chart: `a_1..a_{d_0}` uniform
    /// in `[−B₀, B₀]`, `a_k = g_k(a_1..a_{d_0})` for `k > d_0`.
    Manifold {
        d0: usize,
        d_x: usize,
        half_width: f64,
        maps: Vec<ScalarMap>,
    },
    /// `u(x) = A ξ |x_1 − s|` with `ξ ~ U[−1,1]`, `s ~ U[−S, S]`; Lipschitz
    /// but not smooth, for projection-rate experiments.
    Kink { amplitude: f64, max_shift: f64 },
}

impl InputLaw {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InputLaw::CoefficientDecay {
                order,
                amplitude,
                decay,
                ..
            } => {
                if *order == 0 || !(*amplitude >= 0.0) || !(*decay > 0.5) {
                    return Err(Error::config(
                        "coefficient decay needs order >= 1, amplitude >= 0, decay > 1/2",
                    ));
                }
            }
            InputLaw::Manifold {
                d0,
                d_x,
                half_width,
                maps,
            } => {
                if dim != 1 {
                    return Err(Error::config("manifold law is defined on [-1, 1] only"));
                }
                if *d0 == 0 || d0 >= d_x || !(*half_width > 0.0) {
                    return Err(Error::config("manifold law needs 0 < d0 < d_x and half_width > 0"));
                }
                check_len("manifold maps", d_x - d0, maps.len())?;
            }
            InputLaw::Kink { amplitude, max_shift } => {
                if !(*amplitude >= 0.0) || !(0.0..=1.0).contains(max_shift) {
                    return Err(Error::config("kink law needs amplitude >= 0, max_shift in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Spec of the basis the law is expressed in, if any.
    pub fn basis(&self, dim: usize) -> Option<BasisSpec> {
        match *self {
            InputLaw::CoefficientDecay { basis, order, .. } => Some(BasisSpec {
                kind: basis,
                dim,
                order,
            }),
            InputLaw::Manifold { d_x, .. } => Some(BasisSpec {
                kind: BasisKind::Trigonometric,
                dim: 1,
                order: d_x,
            }),
            InputLaw::Kink { .. } => None,
        }
    }

    /// Radius `R_X` with `‖u‖ ≤ R_X` for every draw.
    pub fn radius(&self, dim: usize) -> f64 {
        match self {
            InputLaw::CoefficientDecay {
                basis,
                order,
                amplitude,
                decay,
            } => {
                let spec = BasisSpec {
                    kind: *basis,
                    dim,
                    order: *order,
                };
                let s: f64 = (0..spec.encode_dim())
                    .map(|j| (spec.decay_rank(j) as f64).powf(-2.0 * decay))
                    .sum();
                amplitude * s.sqrt()
            }
            InputLaw::Manifold {
                d0, half_width, maps, ..
            } => {
                let mut s = *d0 as f64 * half_width * half_width;
                for g in maps {
                    let b = g.sup_on_box(*half_width, *d0);
                    s += b * b;
                }
                s.sqrt()
            }
            InputLaw::Kink { amplitude, max_shift } => {
                // max_s ∫_{-1}^{1} (x - s)² dx = 2/3 + 2 S², times the other axes' volume
                let vol = 2f64.powi(dim as i32 - 1);
                amplitude * (vol * (2.0 / 3.0 + 2.0 * max_shift * max_shift)).sqrt()
            }
        }
    }
}

/// An input law bound to a grid.
#[derive(Debug, Clone)]
pub struct InputSampler {
    law: InputLaw,
    grid: Arc<QuadratureGrid>,
    encoder: Option<BasisEncoder>,
    /// `ρ_j^{−β}` for the decay law.
    scales: Vec<f64>,
}

impl InputSampler {
    pub fn new(law: InputLaw, grid: &Arc<QuadratureGrid>) -> Result<Self> {
        law.validate(grid.dim())?;
        let encoder = law.basis(grid.dim()).map(|s| s.encoder(grid)).transpose()?;
        let scales = match (&law, &encoder) {
            (InputLaw::CoefficientDecay { decay, .. }, Some(enc)) => (0..enc.encode_dim())
                .map(|j| (enc.spec().decay_rank(j) as f64).powf(-decay))
                .collect(),
            _ => Vec::new(),
        };
        Ok(InputSampler {
            law,
            grid: grid.clone(),
            encoder,
            scales,
        })
    }

    pub fn law(&self) -> &InputLaw {
        &self.law
    }

    pub fn radius(&self) -> f64 {
        self.law.radius(self.grid.dim())
    }

    /// Draws the law's coefficient vector (for basis-expressed laws).
    pub fn sample_coefficients<R: Rng>(&self, rng: &mut R) -> Option<Vec<f64>> {
        match &self.law {
            InputLaw::CoefficientDecay { amplitude, .. } => Some(
                self.scales
                    .iter()
                    .map(|s| amplitude * rng.gen_range(-1.0..=1.0) * s)
                    .collect(),
            ),
            InputLaw::Manifold {
                d0,
                d_x,
                half_width,
                maps,
            } => {
                let mut a: Vec<f64> = (0..*d0).map(|_| rng.gen_range(-*half_width..=*half_width)).collect();
                for g in maps {
                    let v = g.eval(&a[..*d0]);
                    a.push(v);
                }
                debug_assert_eq!(a.len(), *d_x);
                Some(a)
            }
            InputLaw::Kink { .. } => None,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<GridFunction> {
        match &self.law {
            InputLaw::Kink { amplitude, max_shift } => {
                let c = amplitude * rng.gen_range(-1.0..=1.0);
                let s = if *max_shift > 0.0 {
                    rng.gen_range(-*max_shift..=*max_shift)
                } else {
                    0.0
                };
                quadrature::sample(&self.grid, |x| c * (x[0] - s).abs())
            }
            _ => {
                let a = self
                    .sample_coefficients(rng)
                    .expect("basis-expressed law has coefficients");
                self.encoder
                    .as_ref()
                    .expect("basis-expressed law has an encoder")
                    .decode(&a)
            }
        }
    }
}

pub fn sample_input<R: Rng>(law: &InputLaw, grid: &Arc<QuadratureGrid>, rng: &mut R) -> Result<GridFunction> {
    InputSampler::new(law.clone(), grid)?.sample(rng)
}

/// Bounded symmetric noise in a trig span: `‖ε‖ ≤ σ̃` for every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseLaw {
    pub sigma: f64,
    pub mode_cap: usize,
    /// Per-mode amplitudes; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
}

impl NoiseLaw {
    pub fn new(sigma: f64, mode_cap: usize) -> Self {
        NoiseLaw {
            sigma,
            mode_cap,
            amplitudes: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sigma >= 0.0) || self.mode_cap == 0 {
            return Err(Error::config("noise needs sigma >= 0 and mode_cap >= 1"));
        }
        if let Some(a) = &self.amplitudes {
            check_len("noise amplitudes", self.mode_cap.pow(dim as u32), a.len())?;
        }
        Ok(())
    }

    pub fn span(&self, dim: usize) -> Result<BasisSpec> {
        BasisSpec::new(BasisKind::Trigonometric, dim, self.mode_cap)
    }
}

#[derive(Debug, Clone)]
pub struct NoiseSampler {
    law: NoiseLaw,
    encoder: BasisEncoder,
}

impl NoiseSampler {
    pub fn new(law: NoiseLaw, grid: &Arc<QuadratureGrid>) -> Result<Self> {
        law.validate(grid.dim())?;
        let encoder = law.span(grid.dim())?.encoder(grid)?;
        Ok(NoiseSampler { law, encoder })
    }

    pub fn encoder(&self) -> &BasisEncoder {
        &self.encoder
    }

    /// Uniform per-mode coefficients, rescaled onto the σ̃-ball only when
    /// outside it, times an independent random sign. The draws are consumed
    /// even when σ̃ = 0 so inputs do not depend on the noise level.
    pub fn sample_coefficients<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.encoder.encode_dim();
        let mut c: Vec<f64> = (0..d)
            .map(|j| {
                let amp = self.law.amplitudes.as_ref().map_or(1.0, |a| a[j]);
                amp * rng.gen_range(-1.0..=1.0)
            })
            .collect();
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let nrm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if nrm > self.law.sigma {
            self.law.sigma / nrm
        } else {
            1.0
        };
        for v in c.iter_mut() {
            *v *= scale * sign;
        }
        c
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<GridFunction> {
        let c = self.sample_coefficients(rng);
        let e = self.encoder.decode(&c)?;
        // decoding is an isometry up to quadrature error; keep the bound exact
        let sigma = self.law.sigma;
        if sigma == 0.0 {
            return Ok(GridFunction::zeros(e.grid()));
        }
        let mut e = e;
        while norm(&e) > sigma {
            e = e.scaled(sigma / norm(&e) * (1.0 - f64::EPSILON));
        }
        Ok(e)
    }
}

pub fn sample_noise<R: Rng>(law: &NoiseLaw, grid: &Arc<QuadratureGrid>, rng: &mut R) -> Result<GridFunction> {
    NoiseSampler::new(law.clone(), grid)?.sample(rng)
}

/// Everything needed to draw a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub operator: OperatorSpec,
    pub input: InputLaw,
    pub noise: NoiseLaw,
}

/// A problem bound to a grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub grid: Arc<QuadratureGrid>,
    pub operator: Operator,
    pub input: InputSampler,
    pub noise: NoiseSampler,
}

impl Problem {
    pub fn new(spec: ProblemSpec, grid: &Arc<QuadratureGrid>) -> Result<Self> {
        let operator = Operator::new(spec.operator.clone(), grid)?;
        let input = InputSampler::new(spec.input.clone(), grid)?;
        let noise = NoiseSampler::new(spec.noise.clone(), grid)?;
        Ok(Problem {
            spec,
            grid: grid.clone(),
            operator,
            input,
            noise,
        })
    }

    /// `R_Y = L_Ψ R_X`.
    pub fn output_radius(&self) -> Result<f64> {
        Ok(self.operator.lipschitz()? * self.input.radius())
    }

    /// `2 n` pairs `(u_i, Ψ(u_i) + ε_i)` from one seeded stream.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(2 * n);
        for _ in 0..2 * n {
            let u = self.input.sample(&mut rng)?;
            let eps = self.noise.sample(&mut rng)?;
            let v = quadrature::axpy(1.0, &eps, &self.operator.apply(&u)?)?;
            pairs.push((u, v));
        }
        Dataset::new(
            pairs,
            DatasetMeta {
                seed,
                problem: self.spec.clone(),
            },
        )
    }
}

pub fn generate_dataset(spec: &ProblemSpec, grid: &Arc<QuadratureGrid>, n: usize, seed: u64) -> Result<Dataset> {
    Problem::new(spec.clone(), grid)?.generate(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{distance, sample};
    use approx::assert_abs_diff_eq;

    fn grid() -> Arc<QuadratureGrid> {
        QuadratureGrid::new(1, 48).unwrap()
    }

    fn heat(t: f64) -> OperatorSpec {
        OperatorSpec::HeatSemigroup { time: t, mode_cap: 7 }
    }

    #[test]
    fn heat_zero_time_is_identity() {
        let g = grid();
        let u = sample(&g, |x| 0.2 + (PI * x[0]).sin() - 0.5 * (3.0 * PI * x[0]).cos()).unwrap();
        let w = apply_operator(&heat(0.0), &u).unwrap();
        assert!(distance(&u, &w).unwrap() < 1e-10);
    }

    #[test]
    fn heat_decays_first_mode() {
        let g = grid();
        let u = sample(&g, |x| (PI * x[0]).sin()).unwrap();
        let w = apply_operator(&heat(0.1), &u).unwrap();
        let amp = (-PI * PI * 0.1).exp();
        assert_abs_diff_eq!(amp, 0.372_707_838_853_438, epsilon = 1e-14);
        assert_abs_diff_eq!(amp, 0.37273, epsilon = 1e-4);
        for (a, b) in w.values().iter().zip(u.values()) {
            assert_abs_diff_eq!(*a, amp * b, epsilon = 1e-10);
        }
    }

    #[test]
    fn shift_is_isometry_and_translates() {
        let g = grid();
        let op = OperatorSpec::Shift {
            shift: 0.3,
            mode_cap: 7,
        };
        let f = |x: f64| 0.4 + (PI * x).sin() + 0.3 * (2.0 * PI * x).cos() - (3.0 * PI * x).sin();
        let u = sample(&g, |x| f(x[0])).unwrap();
        let w = apply_operator(&op, &u).unwrap();
        assert_abs_diff_eq!(norm(&w), norm(&u), epsilon = 1e-10);
        for (v, &x) in w.values().iter().zip(g.nodes()) {
            assert_abs_diff_eq!(*v, f(x - 0.3), epsilon = 1e-10);
        }
    }

    #[test]
    fn shift_two_dimensional() {
        let g = QuadratureGrid::new(2, 24).unwrap();
        let op = OperatorSpec::Shift {
            shift: -0.45,
            mode_cap: 3,
        };
        let f = |x: &[f64]| (PI * x[0]).sin() * (1.0 + (PI * x[1]).cos());
        let u = sample(&g, f).unwrap();
        let w = apply_operator(&op, &u).unwrap();
        let expect = sample(&g, |x| f(&[x[0] + 0.45, x[1] + 0.45])).unwrap();
        assert!(distance(&w, &expect).unwrap() < 1e-10);
    }

    #[test]
    fn out_of_span_rejected() {
        let g = grid();
        let u = sample(&g, |x| (5.0 * PI * x[0]).sin()).unwrap();
        assert!(matches!(apply_operator(&heat(0.1), &u), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn shift_rejects_even_cap() {
        let op = OperatorSpec::Shift {
            shift: 0.1,
            mode_cap: 4,
        };
        assert!(op.validate(1).is_err());
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(operator_lipschitz_constant(&heat(0.0)).unwrap(), 1.0);
        assert_eq!(
            operator_lipschitz_constant(&OperatorSpec::Shift {
                shift: 0.7,
                mode_cap: 5
            })
            .unwrap(),
            1.0
        );
        let op = OperatorSpec::MultiIndexTrig {
            d_x: 2,
            d_y: 1,
            d0: 1,
            projections: vec![vec![3.0, 4.0]],
            maps: vec![ScalarMap::Sine {
                amplitude: 0.5,
                frequency: 2.0,
                phase: 0.0,
            }],
        };
        assert_abs_diff_eq!(operator_lipschitz_constant(&op).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_amplitude_law_gives_zero() {
        let g = grid();
        let law = InputLaw::CoefficientDecay {
            basis: BasisKind::Trigonometric,
            order: 5,
            amplitude: 0.0,
            decay: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = sample_input(&law, &g, &mut rng).unwrap();
        assert_eq!(norm(&u), 0.0);
    }

    #[test]
    fn manifold_surface() {
        let g = grid();
        let law = InputLaw::Manifold {
            d0: 2,
            d_x: 3,
            half_width: 1.0,
            maps: vec![ScalarMap::Quadratic {
                constant: 0.0,
                linear: vec![0.0, 1.0],
                quadratic: vec![1.0, 0.0],
            }],
        };
        let s = InputSampler::new(law, &g).unwrap();
        let enc = BasisSpec::new(BasisKind::Trigonometric, 1, 3)
            .unwrap()
            .encoder(&g)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = enc.encode(&s.sample(&mut rng).unwrap()).unwrap();
            assert!((a[2] - (a[0] * a[0] + a[1])).abs() < 1e-10);
        }
    }

    #[test]
    fn noise_bounded_and_zero_sigma() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = NoiseSampler::new(NoiseLaw::new(0.0, 5), &g).unwrap();
        assert_eq!(norm(&zero.sample(&mut rng).unwrap()), 0.0);
        let s = NoiseSampler::new(NoiseLaw::new(0.05, 5), &g).unwrap();
        for _ in 0..200 {
            assert!(norm(&s.sample(&mut rng).unwrap()) <= 0.05);
        }
    }

    #[test]
    fn dataset_noiseless_and_seeded() {
        let g = grid();
        let spec = ProblemSpec {
            operator: heat(0.0),
            input: InputLaw::CoefficientDecay {
                basis: BasisKind::Trigonometric,
                order: 7,
                amplitude: 1.0,
                decay: 2.0,
            },
            noise: NoiseLaw::new(0.0, 7),
        };
        let a = generate_dataset(&spec, &g, 4, 9).unwrap();
        assert_eq!(a.len(), 8);
        for (u, v) in a.pairs() {
            assert!(distance(u, v).unwrap() < 1e-10);
        }
        let b = generate_dataset(&spec, &g, 4, 9).unwrap();
        assert_eq!(a.pairs(), b.pairs());
    }

    #[test]
    fn encoded_linear_map_of_heat() {
        let g = grid();
        let op = Operator::new(heat(0.05), &g).unwrap();
        let enc = BasisSpec::new(BasisKind::Trigonometric, 1, 7)
            .unwrap()
            .encoder(&g)
            .unwrap();
        let a = op.encoded_linear_map(&enc, &enc).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j {
                    (-PI * PI * (trig_frequency(i + 1).pow(2)) as f64 * 0.05).exp()
                } else {
                    0.0
                };
                assert_abs_diff_eq!(a[i * 7 + j], want, epsilon = 1e-10);
            }
        }
    }
}
