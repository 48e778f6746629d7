//! Multi-head networks for multi-index targets: output `k` is
//! `clamp(g̃_k(V_kᵀ x))` with a learned linear projection `V_k ∈ R^{d_X × d_0}`
//! followed by a small ReLU network on `R^{d_0}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fill_uniform, layer_widths, FnnParams, Network};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexHead {
    /// `V_k`, row-major `d_X × d_0`, no bias.
    pub projection: Vec<f64>,
    /// `g̃_k: R^{d_0} → R`, clipped to the shared bound.
    pub mlp: FnnParams,
}

/// Shape of every head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiIndexSpec {
    pub d0: usize,
    /// Affine layers of each head network.
    pub head_depth: usize,
    pub head_width: usize,
    pub clip: f64,
}

impl MultiIndexSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d0 == 0 || self.head_depth < 1 || self.head_width == 0 || !(self.clip > 0.0) {
            return Err(Error::config(
                "multi-index spec needs d0 >= 1, head depth >= 1, head width >= 1, clip > 0",
            ));
        }
        Ok(())
    }

    pub fn init(&self, d_x: usize, d_y: usize, seed: u64) -> Result<MultiIndexFnn> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = layer_widths(self.d0, 1, self.head_depth, self.head_width);
        let bound = (6.0 / d_x as f64).sqrt();
        let mut heads = Vec::with_capacity(d_y);
        for _ in 0..d_y {
            let projection = (0..d_x * self.d0).map(|_| rng.gen_range(-bound..bound)).collect();
            let mut mlp = FnnParams::zeros(&widths, self.clip)?;
            fill_uniform(mlp.layers_mut(), &mut rng);
            heads.push(MultiIndexHead { projection, mlp });
        }
        MultiIndexFnn::new(d_x, self.d0, heads, self.clip)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexFnn {
    input_dim: usize,
    d0: usize,
    heads: Vec<MultiIndexHead>,
    clip: f64,
}

impl MultiIndexFnn {
    pub fn new(input_dim: usize, d0: usize, heads: Vec<MultiIndexHead>, clip: f64) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::config("multi-index network needs at least one head"));
        }
        let depth = heads[0].mlp.depth();
        let width = heads[0].mlp.width();
        for h in &heads {
            check_len("head projection", input_dim * d0, h.projection.len())?;
            check_len("head input", d0, h.mlp.input_dim())?;
            check_len("head output", 1, h.mlp.output_dim())?;
            if h.mlp.depth() != depth || h.mlp.width() != width {
                return Err(Error::config("all heads must share depth and width"));
            }
            if h.mlp.clip() != clip {
                return Err(Error::config("head clip bound must match the network's"));
            }
        }
        Ok(MultiIndexFnn {
            input_dim,
            d0,
            heads,
            clip,
        })
    }

    pub fn heads(&self) -> &[MultiIndexHead] {
        &self.heads
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn head_depth(&self) -> usize {
        self.heads[0].mlp.depth()
    }

    pub fn head_width(&self) -> usize {
        self.heads[0].mlp.width()
    }

    fn project(&self, head: &MultiIndexHead, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.d0];
        for (row, &xi) in head.projection.chunks(self.d0).zip(x) {
            for (zj, &v) in z.iter_mut().zip(row) {
                *zj += v * xi;
            }
        }
        z
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim, x.len())?;
        self.heads
            .iter()
            .map(|h| Ok(h.mlp.forward(&self.project(h, x))?[0]))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.projection.len() + h.mlp.param_count())
            .sum()
    }
}

pub fn forward_multi_index(net: &MultiIndexFnn, x: &[f64]) -> Result<Vec<f64>> {
    net.forward(x)
}

impl Network for MultiIndexFnn {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.heads.len()
    }

    fn clip(&self) -> f64 {
        self.clip
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        MultiIndexFnn::forward(self, x)
    }

    fn param_count(&self) -> usize {
        MultiIndexFnn::param_count(self)
    }

    /// Per head: projection, then the head network's parameters.
    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for h in &self.heads {
            out.extend_from_slice(&h.projection);
            out.extend(h.mlp.flat_params());
        }
        out
    }

    fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("flat parameters", self.param_count(), p.len())?;
        let mut off = 0;
        for h in &mut self.heads {
            let nv = h.projection.len();
            h.projection.copy_from_slice(&p[off..off + nv]);
            off += nv;
            let nm = h.mlp.param_count();
            h.mlp.set_flat_params(&p[off..off + nm])?;
            off += nm;
        }
        Ok(())
    }

    fn param_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_dim, x.len())?;
        check_len("upstream gradient", self.heads.len(), upstream.len())?;
        let mut out = Vec::with_capacity(self.param_count());
        for (h, &g) in self.heads.iter().zip(upstream) {
            let z = self.project(h, x);
            let grads = h.mlp.backward(&z, &[g])?;
            for &xi in x {
                for &gz in &grads.input {
                    out.push(xi * gz);
                }
            }
            out.extend(grads.flatten());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { layer: 0 });
        }
        Ok(out)
    }

    fn clamp_params(&mut self, kappa: f64) {
        for h in &mut self.heads {
            for v in h.projection.iter_mut() {
                *v = v.clamp(-kappa, kappa);
            }
            h.mlp.clamp_weights(kappa);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_heads_output_zero() {
        let spec = MultiIndexSpec {
            d0: 2,
            head_depth: 3,
            head_width: 8,
            clip: 1.0,
        };
        let mut net = spec.init(16, 4, 1).unwrap();
        for h in &mut net.heads {
            let n = h.mlp.param_count();
            h.mlp.set_flat_params(&vec![0.0; n]).unwrap();
        }
        assert_eq!(net.forward(&[0.3; 16]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn parameter_count_by_shape() {
        let spec = MultiIndexSpec {
            d0: 2,
            head_depth: 3,
            head_width: 8,
            clip: 1.0,
        };
        let net = spec.init(16, 4, 1).unwrap();
        assert_eq!(net.param_count(), 548);
        assert_eq!(net.flat_params().len(), 548);
    }

    #[test]
    fn identity_projection_reduces_to_independent_networks() {
        let d = 3;
        let spec = MultiIndexSpec {
            d0: d,
            head_depth: 2,
            head_width: 5,
            clip: 2.0,
        };
        let mut net = spec.init(d, 2, 5).unwrap();
        for h in &mut net.heads {
            h.projection = vec![0.0; d * d];
            for i in 0..d {
                h.projection[i * d + i] = 1.0;
            }
        }
        let x = [0.2, -0.5, 0.9];
        let y = net.forward(&x).unwrap();
        for (k, h) in net.heads().iter().enumerate() {
            assert_eq!(y[k], h.mlp.forward(&x).unwrap()[0]);
        }
    }

    #[test]
    fn validation() {
        let bad = MultiIndexSpec {
            d0: 0,
            head_depth: 2,
            head_width: 4,
            clip: 1.0,
        };
        assert!(bad.init(4, 2, 0).is_err());
        let spec = MultiIndexSpec {
            d0: 1,
            head_depth: 2,
            head_width: 4,
            clip: 1.0,
        };
        let net = spec.init(4, 2, 0).unwrap();
        assert!(net.forward(&[1.0; 3]).is_err());
    }
}
