//! ReLU feedforward networks with clipped outputs.
//!
//! A network with `L` layers alternates affine maps and ReLU, ends with an
//! affine map and clamps every output component to `[−M, M]`. The clamp is
//! not counted as a layer.

mod multi_index;
mod sizing;

pub use multi_index::{forward_multi_index, MultiIndexFnn, MultiIndexHead, MultiIndexSpec};
pub(crate) use sizing::ceil_int;
pub use sizing::{
    clip_bound, size_constrained, size_multi_index, size_unconstrained, ConstrainedInputs, SizedArch, SizingConstants,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Network class: the constrained class bounds parameter magnitude by `κ`
/// and the number of nonzeros by `K`; the unconstrained class drops both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchClass {
    Constrained {
        depth: usize,
        width: usize,
        cardinality: usize,
        kappa: f64,
        clip: f64,
    },
    Unconstrained {
        depth: usize,
        width: usize,
        clip: f64,
    },
}

impl ArchClass {
    pub fn depth(&self) -> usize {
        match *self {
            ArchClass::Constrained { depth, .. } | ArchClass::Unconstrained { depth, .. } => depth,
        }
    }

    pub fn width(&self) -> usize {
        match *self {
            ArchClass::Constrained { width, .. } | ArchClass::Unconstrained { width, .. } => width,
        }
    }

    pub fn clip(&self) -> f64 {
        match *self {
            ArchClass::Constrained { clip, .. } | ArchClass::Unconstrained { clip, .. } => clip,
        }
    }

    pub fn kappa(&self) -> Option<f64> {
        match *self {
            ArchClass::Constrained { kappa, .. } => Some(kappa),
            ArchClass::Unconstrained { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() < 2 || self.width() < 1 || !(self.clip() > 0.0) {
            return Err(Error::config("architecture needs depth >= 2, width >= 1 and clip > 0"));
        }
        if let ArchClass::Constrained { cardinality, kappa, .. } = *self {
            if cardinality < 1 || !(kappa > 0.0) {
                return Err(Error::config("constrained class needs K >= 1 and kappa > 0"));
            }
        }
        Ok(())
    }
}

/// Dense layer `z = W h + b`, `W` row-major with shape `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, h: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks(self.inputs).zip(&self.bias) {
            let mut acc = *b;
            for (w, x) in row.iter().zip(h) {
                acc += w * x;
            }
            out.push(acc);
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[inline]
pub fn clamp_output(z: f64, clip: f64) -> f64 {
    z.clamp(-clip, clip)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnParams {
    layers: Vec<Layer>,
    clip: f64,
}

/// Gradients in the same shape as the network, plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    pub input: Vec<f64>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

impl FnnParams {
    pub fn new(layers: Vec<Layer>, clip: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        if !(clip > 0.0) {
            return Err(Error::config("clip bound must be positive"));
        }
        for (i, l) in layers.iter().enumerate() {
            check_len("layer weights", l.inputs * l.outputs, l.weights.len())?;
            check_len("layer bias", l.outputs, l.bias.len())?;
            if i > 0 {
                check_len("layer input width", layers[i - 1].outputs, l.inputs)?;
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: i + 1 });
            }
        }
        Ok(FnnParams { layers, clip })
    }

    /// All-zero network with the given layer widths `[d_X, p, …, p, d_Y]`.
    pub fn zeros(widths: &[usize], clip: f64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config("need at least input and output widths"));
        }
        let layers = widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::new(layers, clip)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Largest hidden width (the input dimension for a single-layer net).
    pub fn width(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .max()
            .unwrap_or(self.layers[0].inputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Output before clipping.
    pub fn forward_unclipped(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim(), x.len())?;
        let mut h = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.apply(&h, &mut z);
            if i < last {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut h, &mut z);
        }
        Ok(h)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.forward_unclipped(x)?;
        for v in y.iter_mut() {
            *v = clamp_output(*v, self.clip);
        }
        Ok(y)
    }

    /// Reverse-mode gradient of `⟨upstream, f(x)⟩`.
    ///
    /// ReLU has derivative 0 at 0. The clamp has derivative 1 on
    /// `[−M, M]` (boundary included) and 0 outside.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        check_len("network input", self.input_dim(), x.len())?;
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        let nl = self.layers.len();
        // activations[l] is the input to layer l
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(nl);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(nl);
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.outputs);
            l.apply(&h, &mut z);
            activations.push(h);
            h = if i + 1 < nl {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            pre.push(z);
        }

        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(&pre[nl - 1])
            .map(|(g, z)| if z.abs() <= self.clip { *g } else { 0.0 })
            .collect();
        let mut grads: Vec<Layer> = Vec::with_capacity(nl);
        for li in (0..nl).rev() {
            let l = &self.layers[li];
            let a = &activations[li];
            let mut gw = vec![0.0; l.weights.len()];
            for (row, &d) in gw.chunks_mut(l.inputs).zip(&delta) {
                if d != 0.0 {
                    for (g, &ai) in row.iter_mut().zip(a) {
                        *g = d * ai;
                    }
                }
            }
            let gb = delta.clone();
            if gw.iter().chain(&gb).any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: li + 1 });
            }
            let mut prev = vec![0.0; l.inputs];
            for (row, &d) in l.weights.chunks(l.inputs).zip(&delta) {
                if d != 0.0 {
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
            }
            if li > 0 {
                for (p, &z) in prev.iter_mut().zip(&pre[li - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            grads.push(Layer {
                inputs: l.inputs,
                outputs: l.outputs,
                weights: gw,
                bias: gb,
            });
            delta = prev;
        }
        grads.reverse();
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { layer: 1 });
        }
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }

    /// Parameters in layer order, weights (row-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("flat parameters", self.param_count(), p.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn clamp_weights(&mut self, kappa: f64) {
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = v.clamp(-kappa, kappa);
            }
        }
    }

    pub fn count_nonzero(&self, threshold: f64) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .filter(|v| v.abs() > threshold)
            .count()
    }

    pub fn max_abs_param(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn forward(params: &FnnParams, x: &[f64]) -> Result<Vec<f64>> {
    params.forward(x)
}

pub fn backward(params: &FnnParams, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
    params.backward(x, upstream)
}

pub fn clamp_weights(params: &mut FnnParams, kappa: f64) {
    params.clamp_weights(kappa)
}

/// Default threshold for [`count_nonzero`].
pub const NONZERO_THRESHOLD: f64 = 1e-12;

pub fn count_nonzero(params: &FnnParams, threshold: f64) -> usize {
    params.count_nonzero(threshold)
}

/// Fills every layer's weights with `U(−√(6/fan_in), √(6/fan_in))` draws
/// (layer order, row-major) and zeroes the biases.
pub(crate) fn fill_uniform(layers: &mut [Layer], rng: &mut ChaCha8Rng) {
    for l in layers {
        let bound = (6.0 / l.inputs as f64).sqrt();
        for w in l.weights.iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

/// Hidden widths for a depth-`L`, width-`p` network.
pub fn layer_widths(d_x: usize, d_y: usize, depth: usize, width: usize) -> Vec<usize> {
    let mut w = vec![d_x];
    w.extend(std::iter::repeat_n(width, depth.saturating_sub(1)));
    w.push(d_y);
    w
}

pub fn init_params(arch: &ArchClass, d_x: usize, d_y: usize, seed: u64) -> Result<FnnParams> {
    arch.validate()?;
    let mut net = FnnParams::zeros(&layer_widths(d_x, d_y, arch.depth(), arch.width()), arch.clip())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_uniform(&mut net.layers, &mut rng);
    if let Some(kappa) = arch.kappa() {
        net.clamp_weights(kappa);
    }
    Ok(net)
}

/// Two-layer network computing `x ↦ clamp(A x)` exactly, via
/// `A x = A relu(x) − A relu(−x)`. `a` is row-major `d_out × d_in`.
pub fn linear_network(a: &[f64], d_in: usize, d_out: usize, clip: f64) -> Result<FnnParams> {
    check_len("linear map entries", d_in * d_out, a.len())?;
    let mut first = Layer::zeros(d_in, 2 * d_in);
    for i in 0..d_in {
        first.weights[i * d_in + i] = 1.0;
        first.weights[(d_in + i) * d_in + i] = -1.0;
    }
    let mut second = Layer::zeros(2 * d_in, d_out);
    for r in 0..d_out {
        for c in 0..d_in {
            second.weights[r * 2 * d_in + c] = a[r * d_in + c];
            second.weights[r * 2 * d_in + d_in + c] = -a[r * d_in + c];
        }
    }
    FnnParams::new(vec![first, second], clip)
}

/// Common surface the trainer needs from a network.
pub trait Network: Clone + Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn clip(&self) -> f64;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn param_count(&self) -> usize;
    fn flat_params(&self) -> Vec<f64>;
    fn set_flat_params(&mut self, p: &[f64]) -> Result<()>;
    /// Gradient of `⟨upstream, f(x)⟩` in [`Network::flat_params`] order.
    fn param_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>>;
    fn clamp_params(&mut self, kappa: f64);
}

impl Network for FnnParams {
    fn input_dim(&self) -> usize {
        FnnParams::input_dim(self)
    }
    fn output_dim(&self) -> usize {
        FnnParams::output_dim(self)
    }
    fn clip(&self) -> f64 {
        self.clip
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        FnnParams::forward(self, x)
    }
    fn param_count(&self) -> usize {
        FnnParams::param_count(self)
    }
    fn flat_params(&self) -> Vec<f64> {
        FnnParams::flat_params(self)
    }
    fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        FnnParams::set_flat_params(self, p)
    }
    fn param_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward(x, upstream)?.flatten())
    }
    fn clamp_params(&mut self, kappa: f64) {
        self.clamp_weights(kappa)
    }
}

/// Either network family, as produced by training or loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedNetwork {
    Dense(FnnParams),
    MultiIndex(MultiIndexFnn),
}

impl TrainedNetwork {
    pub fn max_abs_param(&self) -> f64 {
        self.flat_params().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

macro_rules! delegate {
    ($self:ident, $n:ident => $e:expr) => {
        match $self {
            TrainedNetwork::Dense($n) => $e,
            TrainedNetwork::MultiIndex($n) => $e,
        }
    };
}

impl Network for TrainedNetwork {
    fn input_dim(&self) -> usize {
        delegate!(self, n => Network::input_dim(n))
    }
    fn output_dim(&self) -> usize {
        delegate!(self, n => Network::output_dim(n))
    }
    fn clip(&self) -> f64 {
        delegate!(self, n => Network::clip(n))
    }
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        delegate!(self, n => Network::forward(n, x))
    }
    fn param_count(&self) -> usize {
        delegate!(self, n => Network::param_count(n))
    }
    fn flat_params(&self) -> Vec<f64> {
        delegate!(self, n => Network::flat_params(n))
    }
    fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        delegate!(self, n => Network::set_flat_params(n, p))
    }
    fn param_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        delegate!(self, n => Network::param_gradient(n, x, upstream))
    }
    fn clamp_params(&mut self, kappa: f64) {
        delegate!(self, n => Network::clamp_params(n, kappa))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_gadget() -> FnnParams {
        let l1 = Layer {
            inputs: 1,
            outputs: 2,
            weights: vec![1.0, -1.0],
            bias: vec![0.0, 0.0],
        };
        let l2 = Layer {
            inputs: 2,
            outputs: 1,
            weights: vec![1.0, -1.0],
            bias: vec![0.0],
        };
        FnnParams::new(vec![l1, l2], 10.0).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = FnnParams::zeros(&[3, 5, 5, 2], 1.0).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(count_nonzero(&net, NONZERO_THRESHOLD), 0);
    }

    #[test]
    fn clipping_contract() {
        let m = 1.5;
        let l = Layer {
            inputs: 3,
            outputs: 3,
            weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            bias: vec![0.0; 3],
        };
        let net = FnnParams::new(vec![l], m).unwrap();
        assert_eq!(net.forward(&[2.0 * m, -2.0 * m, 0.0]).unwrap(), vec![m, -m, 0.0]);
    }

    #[test]
    fn identity_gadget_forward() {
        assert_abs_diff_eq!(identity_gadget().forward(&[0.7]).unwrap()[0], 0.7);
        assert_abs_diff_eq!(identity_gadget().forward(&[-0.3]).unwrap()[0], -0.3);
    }

    #[test]
    fn saturated_output_has_zero_gradient() {
        let l = Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            bias: vec![5.0],
        };
        let net = FnnParams::new(vec![l], 1.0).unwrap();
        let g = net.backward(&[0.1], &[1.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_squared_loss_gradient() {
        let l = Layer {
            inputs: 2,
            outputs: 2,
            weights: vec![0.5, -0.2, 0.1, 0.3],
            bias: vec![0.05, -0.1],
        };
        let net = FnnParams::new(vec![l], 100.0).unwrap();
        let x = [0.4, -0.7];
        let y = [0.2, 0.1];
        let f = net.forward(&x).unwrap();
        let up: Vec<f64> = f.iter().zip(&y).map(|(a, b)| 2.0 * (a - b)).collect();
        let g = net.backward(&x, &up).unwrap();
        for i in 0..2 {
            for (j, xj) in x.iter().enumerate() {
                assert_abs_diff_eq!(
                    g.layers[0].weights[i * 2 + j],
                    2.0 * (f[i] - y[i]) * xj,
                    epsilon = 1e-15
                );
            }
            assert_abs_diff_eq!(g.layers[0].bias[i], 2.0 * (f[i] - y[i]), epsilon = 1e-15);
        }
    }

    #[test]
    fn clamp_and_count() {
        let mut net = init_params(
            &ArchClass::Unconstrained {
                depth: 3,
                width: 4,
                clip: 1.0,
            },
            2,
            2,
            1,
        )
        .unwrap();
        let before = net.clone();
        net.clamp_weights(100.0);
        assert_eq!(net, before);
        net.layers_mut()[0].weights[0] = 0.9;
        net.clamp_weights(0.3);
        assert_eq!(net.layers()[0].weights[0], 0.3);
        assert!(net.max_abs_param() <= 0.3);
        assert_eq!(net.count_nonzero(NONZERO_THRESHOLD), 4 * 2 + 4 * 4 + 2 * 4);
    }

    #[test]
    fn init_is_seeded() {
        let arch = ArchClass::Unconstrained {
            depth: 3,
            width: 8,
            clip: 1.0,
        };
        let a = init_params(&arch, 4, 3, 42).unwrap();
        let b = init_params(&arch, 4, 3, 42).unwrap();
        let c = init_params(&arch, 4, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.depth(), 3);
        assert_eq!(a.width(), 8);
        assert!(a.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_weight_mean() {
        let arch = ArchClass::Unconstrained {
            depth: 2,
            width: 100,
            clip: 1.0,
        };
        let net = init_params(&arch, 50, 50, 7).unwrap();
        let ws: Vec<f64> = net.layers().iter().flat_map(|l| l.weights.clone()).collect();
        assert_eq!(ws.len(), 10_000);
        let mean = ws.iter().sum::<f64>() / ws.len() as f64;
        // mixed fan-in (50 and 100): bound the per-draw std by the larger one
        let sd = (6.0f64 / 50.0).sqrt() / 3f64.sqrt();
        assert!(mean.abs() < 3.0 * sd / 100.0, "mean {mean}");
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(ws.iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn shape_errors() {
        let net = FnnParams::zeros(&[3, 2], 1.0).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(FnnParams::new(vec![Layer::zeros(2, 3), Layer::zeros(2, 1)], 1.0).is_err());
        assert!(FnnParams::zeros(&[2, 2], 0.0).is_err());
    }

    #[test]
    fn overflowing_gradient_names_layer() {
        let l1 = Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1e300],
            bias: vec![0.0],
        };
        let l2 = Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1e300],
            bias: vec![0.0],
        };
        let net = FnnParams::new(vec![l1, l2], f64::INFINITY).unwrap();
        let err = net.backward(&[1e300], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::NumericOverflow { layer: 2 }), "{err}");
    }

    #[test]
    fn flat_roundtrip() {
        let arch = ArchClass::Unconstrained {
            depth: 3,
            width: 5,
            clip: 2.0,
        };
        let a = init_params(&arch, 3, 2, 9).unwrap();
        let mut b = init_params(&arch, 3, 2, 10).unwrap();
        b.set_flat_params(&a.flat_params()).unwrap();
        assert_eq!(a, b);
        assert!(b.set_flat_params(&[0.0]).is_err());
    }
}
