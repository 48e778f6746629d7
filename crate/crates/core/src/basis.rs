//! Deterministic orthonormal basis encoders: tensor Legendre polynomials and
//! tensor trigonometric functions on `[-1,1]^D`.
//!
//! Legendre multi-indices run over degrees `{0..r-1}^D`; trigonometric ones
//! over `{1..r}^D` with `T_1 = 1/√2`, `T_{2k} = sin(kπx)`, `T_{2k+1} = cos(kπx)`.
//! Both enumerate lexicographically and give `d = r^D` coefficients.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::quadrature::{GridFunction, QuadratureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Legendre,
    Trigonometric,
}

/// Normalized Legendre polynomial `√((2k+1)/2) P̃_k(x)`.
pub fn eval_legendre_1d(k: usize, x: f64) -> f64 {
    let mut p0 = 1.0;
    let mut p1 = x;
    let raw = match k {
        0 => 1.0,
        1 => x,
        _ => {
            for j in 2..=k {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    };
    ((2 * k + 1) as f64 / 2.0).sqrt() * raw
}

/// One-dimensional trigonometric function `T_k`, `k ≥ 1`.
pub fn eval_trig_1d(k: usize, x: f64) -> f64 {
    assert!(k >= 1, "trigonometric index starts at 1");
    if k == 1 {
        return FRAC_1_SQRT_2;
    }
    let freq = (k / 2) as f64;
    if k.is_multiple_of(2) {
        (freq * PI * x).sin()
    } else {
        (freq * PI * x).cos()
    }
}

/// Angular frequency index of `T_k` (0 for the constant mode).
pub fn trig_frequency(k: usize) -> usize {
    k / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub dim: usize,
    /// Per-axis order `r`.
    pub order: usize,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, dim: usize, order: usize) -> Result<Self> {
        if dim == 0 || order == 0 {
            return Err(Error::config("basis dimension and order must be positive"));
        }
        Ok(BasisSpec { kind, dim, order })
    }

    /// Builds the spec whose tensor basis has exactly `encode_dim` elements.
    pub fn with_encode_dim(kind: BasisKind, dim: usize, encode_dim: usize) -> Result<Self> {
        let r = integer_root(encode_dim, dim)
            .ok_or_else(|| Error::config(format!("encode dimension {encode_dim} is not a perfect {dim}-th power")))?;
        Self::new(kind, dim, r)
    }

    pub fn encode_dim(&self) -> usize {
        self.order.pow(self.dim as u32)
    }

    /// First per-axis index of the family (degree 0 or `T_1`).
    fn first_index(&self) -> usize {
        match self.kind {
            BasisKind::Legendre => 0,
            BasisKind::Trigonometric => 1,
        }
    }

    /// Multi-index of the `j`-th basis function in lexicographic order.
    pub fn multi_index(&self, j: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        let mut rem = j;
        for slot in out.iter_mut().rev() {
            *slot = rem % self.order + self.first_index();
            rem /= self.order;
        }
        out
    }

    pub fn eval_1d(&self, k: usize, x: f64) -> f64 {
        match self.kind {
            BasisKind::Legendre => eval_legendre_1d(k, x),
            BasisKind::Trigonometric => eval_trig_1d(k, x),
        }
    }

    /// Tensor basis function `φ_j` at `x`.
    pub fn eval(&self, j: usize, x: &[f64]) -> f64 {
        self.multi_index(j)
            .iter()
            .zip(x)
            .map(|(&k, &xi)| self.eval_1d(k, xi))
            .product()
    }

    /// Smallest grid order for which the quadrature Gram matrix is the
    /// identity to near machine precision.
    ///
    /// Legendre products have degree `≤ 2r-2`, so `r+1` nodes are exact.
    /// Trigonometric products are not polynomials; `3r+8` nodes keep the
    /// Gram error below `1e-14` for `r ≤ 16`.
    pub fn required_grid_order(&self) -> usize {
        match self.kind {
            BasisKind::Legendre => self.order + 1,
            BasisKind::Trigonometric => 3 * self.order + 8,
        }
    }

    /// Default grid order for this spec alone.
    pub fn default_grid_order(&self) -> usize {
        self.required_grid_order().max(2 * self.order + 2).max(16)
    }

    /// An encoder for functions on `grid`.
    pub fn encoder(&self, grid: &Arc<QuadratureGrid>) -> Result<BasisEncoder> {
        BasisEncoder::new(*self, grid)
    }

    /// "Total degree" position used to order coefficient decay: `1 + Σ_j k_j`
    /// with trig indices shifted to start at 0.
    pub fn decay_rank(&self, j: usize) -> usize {
        1 + self
            .multi_index(j)
            .iter()
            .map(|&k| k - self.first_index())
            .sum::<usize>()
    }
}

pub(crate) fn integer_root(n: usize, dim: usize) -> Option<usize> {
    if dim == 0 || n == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / dim as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&r| r > 0 && r.checked_pow(dim as u32) == Some(n))
}

/// A basis spec bound to a grid, with every basis function tabulated at the
/// grid nodes.
#[derive(Debug, Clone)]
pub struct BasisEncoder {
    spec: BasisSpec,
    grid: Arc<QuadratureGrid>,
    /// `d × m^D`, row `j` holds `φ_j` at every tensor point.
    table: Vec<f64>,
    /// `table` scaled by the tensor weights.
    weighted: Vec<f64>,
}

/// Encoders are equal when they tabulate the same spec on the same grid.
impl PartialEq for BasisEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.grid.same_as(&other.grid)
    }
}

impl BasisEncoder {
    pub fn new(spec: BasisSpec, grid: &Arc<QuadratureGrid>) -> Result<Self> {
        if grid.dim() != spec.dim {
            return Err(Error::config(format!(
                "basis dimension {} does not match grid dimension {}",
                spec.dim,
                grid.dim()
            )));
        }
        let need = spec.required_grid_order();
        if grid.order() < need {
            return Err(Error::config(format!(
                "{:?} basis of order {} needs grid order m >= {need}, got {}",
                spec.kind,
                spec.order,
                grid.order()
            )));
        }
        let m = grid.order();
        let first = spec.first_index();
        // per-axis values, r × m
        let axis: Vec<f64> = (0..spec.order)
            .flat_map(|k| grid.nodes().iter().map(move |&x| spec.eval_1d(k + first, x)))
            .collect();
        let d = spec.encode_dim();
        let n = grid.len();
        let mut table = vec![0.0; d * n];
        let mut pidx = vec![0; spec.dim];
        for j in 0..d {
            let kidx = spec.multi_index(j);
            let row = &mut table[j * n..(j + 1) * n];
            for (p, slot) in row.iter_mut().enumerate() {
                grid.axis_indices(p, &mut pidx);
                let mut v = 1.0;
                for (&k, &i) in kidx.iter().zip(&pidx) {
                    v *= axis[(k - first) * m + i];
                }
                *slot = v;
            }
        }
        let w = grid.tensor_weights();
        let weighted = table
            .chunks(n)
            .flat_map(|row| row.iter().zip(w).map(|(a, b)| a * b))
            .collect();
        Ok(BasisEncoder {
            spec,
            grid: grid.clone(),
            table,
            weighted,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn encode_dim(&self) -> usize {
        self.spec.encode_dim()
    }

    /// Row `j` of the tabulated basis.
    pub fn basis_values(&self, j: usize) -> &[f64] {
        let n = self.grid.len();
        &self.table[j * n..(j + 1) * n]
    }

    pub fn basis_function(&self, j: usize) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.basis_values(j).to_vec()).expect("tabulated basis values are finite")
    }

    pub fn encode(&self, u: &GridFunction) -> Result<Vec<f64>> {
        if !u.grid().same_as(&self.grid) {
            return Err(Error::DimensionMismatch {
                what: "encoder grid points",
                expected: self.grid.len(),
                found: u.grid().len(),
            });
        }
        Ok(self.encode_values(u.values()))
    }

    pub(crate) fn encode_values(&self, values: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        self.weighted
            .chunks(n)
            .map(|row| {
                let mut acc = 0.0;
                for (a, b) in row.iter().zip(values) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    pub fn decode(&self, coeffs: &[f64]) -> Result<GridFunction> {
        check_len("basis coefficients", self.encode_dim(), coeffs.len())?;
        let n = self.grid.len();
        let mut values = vec![0.0; n];
        for (row, &a) in self.table.chunks(n).zip(coeffs) {
            if a == 0.0 {
                continue;
            }
            for (v, b) in values.iter_mut().zip(row) {
                *v += a * b;
            }
        }
        GridFunction::new(self.grid.clone(), values)
    }

    pub fn project(&self, u: &GridFunction) -> Result<GridFunction> {
        self.decode(&self.encode(u)?)
    }

    pub fn projection_error(&self, u: &GridFunction) -> Result<f64> {
        crate::quadrature::distance(&self.project(u)?, u)
    }
}

pub fn encode(spec: &BasisSpec, u: &GridFunction) -> Result<Vec<f64>> {
    spec.encoder(u.grid())?.encode(u)
}

pub fn decode(spec: &BasisSpec, coeffs: &[f64], grid: &Arc<QuadratureGrid>) -> Result<GridFunction> {
    spec.encoder(grid)?.decode(coeffs)
}

pub fn project(spec: &BasisSpec, u: &GridFunction) -> Result<GridFunction> {
    spec.encoder(u.grid())?.project(u)
}

pub fn projection_error(spec: &BasisSpec, u: &GridFunction) -> Result<f64> {
    spec.encoder(u.grid())?.projection_error(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{distance, inner_product, norm, sample};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(dim: usize, m: usize) -> Arc<QuadratureGrid> {
        QuadratureGrid::new(dim, m).unwrap()
    }

    #[test]
    fn legendre_values() {
        assert_abs_diff_eq!(eval_legendre_1d(0, 0.3), FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_legendre_1d(1, 1.0), 1.224744871391589, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_legendre_1d(2, 0.5), -0.19764235376052372, epsilon = 1e-15);
    }

    #[test]
    fn trig_values() {
        assert_abs_diff_eq!(eval_trig_1d(1, 0.9), FRAC_1_SQRT_2, epsilon = 0.0);
        assert_abs_diff_eq!(eval_trig_1d(2, 0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_trig_1d(3, 0.25), FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn multi_indices_are_lexicographic() {
        let s = BasisSpec::new(BasisKind::Legendre, 2, 3).unwrap();
        assert_eq!(s.encode_dim(), 9);
        assert_eq!(s.multi_index(0), vec![0, 0]);
        assert_eq!(s.multi_index(1), vec![0, 1]);
        assert_eq!(s.multi_index(3), vec![1, 0]);
        let t = BasisSpec::new(BasisKind::Trigonometric, 2, 3).unwrap();
        assert_eq!(t.multi_index(0), vec![1, 1]);
        assert_eq!(t.multi_index(8), vec![3, 3]);
    }

    #[test]
    fn encode_dim_roots() {
        let s = BasisSpec::with_encode_dim(BasisKind::Trigonometric, 2, 16).unwrap();
        assert_eq!(s.order, 4);
        assert!(BasisSpec::with_encode_dim(BasisKind::Legendre, 2, 10).is_err());
    }

    #[test]
    fn gram_is_identity() {
        for kind in [BasisKind::Legendre, BasisKind::Trigonometric] {
            for dim in 1..=2 {
                for r in [1, 3, 8] {
                    let spec = BasisSpec::new(kind, dim, r).unwrap();
                    let g = grid(dim, spec.required_grid_order());
                    let enc = spec.encoder(&g).unwrap();
                    for i in 0..spec.encode_dim() {
                        let c = enc.encode(&enc.basis_function(i)).unwrap();
                        for (j, v) in c.iter().enumerate() {
                            let e = if i == j { 1.0 } else { 0.0 };
                            assert!((v - e).abs() < 1e-9, "{kind:?} D={dim} r={r} ({i},{j}) {v}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn encode_linear_function() {
        let g = grid(1, 8);
        let spec = BasisSpec::new(BasisKind::Legendre, 1, 3).unwrap();
        let u = sample(&g, |x| x[0]).unwrap();
        let a = encode(&spec, &u).unwrap();
        assert_abs_diff_eq!(a[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a[1], (2.0f64 / 3.0).sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(a[2], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_in_zero_out() {
        let g = grid(2, 20);
        let spec = BasisSpec::new(BasisKind::Trigonometric, 2, 3).unwrap();
        let enc = spec.encoder(&g).unwrap();
        let a = enc.encode(&GridFunction::zeros(&g)).unwrap();
        assert!(a.iter().all(|&v| v == 0.0));
        let z = enc.decode(&[0.0; 9]).unwrap();
        assert_eq!(norm(&z), 0.0);
        assert!(enc.decode(&[0.0; 3]).is_err());
    }

    #[test]
    fn decode_unit_vector_is_basis_function() {
        let g = grid(1, 20);
        let spec = BasisSpec::new(BasisKind::Trigonometric, 1, 4).unwrap();
        let enc = spec.encoder(&g).unwrap();
        let f = enc.decode(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        for (v, &x) in f.values().iter().zip(g.nodes()) {
            assert_abs_diff_eq!(*v, (PI * x).cos(), epsilon = 1e-14);
        }
    }

    #[test]
    fn encode_decode_left_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(2, 24);
        for kind in [BasisKind::Legendre, BasisKind::Trigonometric] {
            let spec = BasisSpec::new(kind, 2, 5).unwrap();
            let enc = spec.encoder(&g).unwrap();
            let a: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = enc.encode(&enc.decode(&a).unwrap()).unwrap();
            for (x, y) in a.iter().zip(&back) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn projection_of_cubic() {
        let g = grid(1, 16);
        let spec = BasisSpec::new(BasisKind::Legendre, 1, 2).unwrap();
        let u = sample(&g, |x| x[0].powi(3)).unwrap();
        let err = projection_error(&spec, &u).unwrap();
        assert_abs_diff_eq!(err, 0.2138089935299395, epsilon = 1e-12);
        assert_abs_diff_eq!(err, (8.0f64 / 175.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn projection_idempotent_and_in_span() {
        let g = grid(1, 30);
        let spec = BasisSpec::new(BasisKind::Trigonometric, 1, 6).unwrap();
        let enc = spec.encoder(&g).unwrap();
        let u = sample(&g, |x| (x[0] * 2.0).exp()).unwrap();
        let p = enc.project(&u).unwrap();
        let pp = enc.project(&p).unwrap();
        assert!(distance(&p, &pp).unwrap() < 1e-9);
        let inspan = sample(&g, |x| 0.3 + (2.0 * PI * x[0]).sin()).unwrap();
        assert!(enc.projection_error(&inspan).unwrap() < 1e-9);
    }

    #[test]
    fn projection_error_nested_decrease() {
        let g = grid(1, 64);
        let u = sample(&g, |x| (3.0 * x[0]).sin() + x[0].abs()).unwrap();
        let e2 = projection_error(&BasisSpec::new(BasisKind::Legendre, 1, 2).unwrap(), &u).unwrap();
        let e4 = projection_error(&BasisSpec::new(BasisKind::Legendre, 1, 4).unwrap(), &u).unwrap();
        assert!(e4 <= e2);
    }

    #[test]
    fn insufficient_grid_names_required_order() {
        let g = grid(1, 10);
        let spec = BasisSpec::new(BasisKind::Trigonometric, 1, 4).unwrap();
        let err = spec.encoder(&g).unwrap_err().to_string();
        assert!(err.contains("m >= 20"), "{err}");
        let leg = BasisSpec::new(BasisKind::Legendre, 1, 10).unwrap();
        assert!(leg.encoder(&g).is_err());
        let leg = BasisSpec::new(BasisKind::Legendre, 1, 9).unwrap();
        assert!(leg.encoder(&g).is_ok());
    }

    #[test]
    fn linearity() {
        let g = grid(1, 30);
        let enc = BasisSpec::new(BasisKind::Trigonometric, 1, 7)
            .unwrap()
            .encoder(&g)
            .unwrap();
        let u = sample(&g, |x| x[0].exp()).unwrap();
        let v = sample(&g, |x| x[0].abs()).unwrap();
        let w = crate::quadrature::axpy(-1.7, &u, &v).unwrap();
        let (eu, ev, ew) = (
            enc.encode(&u).unwrap(),
            enc.encode(&v).unwrap(),
            enc.encode(&w).unwrap(),
        );
        for i in 0..7 {
            assert!((ew[i] - (-1.7 * eu[i] + ev[i])).abs() < 1e-10);
        }
        let _ = inner_product(&u, &v).unwrap();
    }
}
