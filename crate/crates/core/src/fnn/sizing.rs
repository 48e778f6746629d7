//! Architecture sizing rules that tie depth and width to the sample size.
//!
//! The exponents are fixed by the approximation/estimation balance; the
//! multiplicative constants are left to the caller as [`SizingConstants`].

use serde::{Deserialize, Serialize};

use super::{ArchClass, MultiIndexSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizingConstants {
    pub c_l: f64,
    pub c_p: f64,
    pub c_k: f64,
}

impl Default for SizingConstants {
    fn default() -> Self {
        SizingConstants {
            c_l: 1.0,
            c_p: 1.0,
            c_k: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizedArch {
    pub arch: ArchClass,
    /// `L̃ p̃` for the unconstrained rule.
    pub target_product: Option<usize>,
    pub l_tilde: Option<usize>,
    pub p_tilde: Option<usize>,
}

/// Ceiling that ignores rounding noise just above an integer.
pub(crate) fn ceil_int(x: f64) -> usize {
    let r = x.round();
    let v = if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    v.max(0.0) as usize
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Clip bound `M = √d_Y · L_{E_Y} · R_Y`.
pub fn clip_bound(d_y: usize, lip_ey: f64, r_y: f64) -> f64 {
    (d_y as f64).sqrt() * lip_ey * r_y
}

fn dense_split(n: usize, exponent_dim: usize, d_y: usize, c: &SizingConstants) -> (usize, usize, usize) {
    let e = exponent_dim as f64 / (4.0 + 2.0 * exponent_dim as f64);
    let t = ceil_int((n as f64 / d_y as f64).powf(e)).max(1);
    let depth_cap = ceil_int(c.c_l * log2(n as f64)).max(1);
    let l_tilde = t.min(depth_cap);
    let p_tilde = t.div_ceil(l_tilde);
    (t, l_tilde, p_tilde)
}

fn dense_depth_width(l_tilde: usize, p_tilde: usize, c: &SizingConstants) -> (usize, usize) {
    let l = ceil_int(c.c_l * l_tilde as f64 * log2(l_tilde as f64 + 1.0)).max(2);
    let p = ceil_int(c.c_p * p_tilde as f64 * log2(p_tilde as f64 + 1.0)).max(1);
    (l, p)
}

/// Unconstrained class: `L̃ p̃ = ⌈(n/d_Y)^{d_X/(4+2d_X)}⌉`, depth capped at
/// `⌈c_L log₂ n⌉` with the remainder going to width, then
/// `L = ⌈c_L L̃ log₂(L̃+1)⌉`, `p = ⌈c_p p̃ log₂(p̃+1)⌉`.
///
/// `L` is floored at 2 so the network has at least one hidden layer.
pub fn size_unconstrained(n: usize, d_x: usize, d_y: usize, r_y: f64, lip_ey: f64, c: &SizingConstants) -> SizedArch {
    let (t, l_tilde, p_tilde) = dense_split(n, d_x, d_y, c);
    let (depth, width) = dense_depth_width(l_tilde, p_tilde, c);
    SizedArch {
        arch: ArchClass::Unconstrained {
            depth,
            width,
            clip: clip_bound(d_y, lip_ey, r_y),
        },
        target_product: Some(t),
        l_tilde: Some(l_tilde),
        p_tilde: Some(p_tilde),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedInputs {
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub r_x: f64,
    pub r_y: f64,
    pub lip_ex: f64,
    pub lip_ey: f64,
    pub lip_dx: f64,
    pub lip_psi: f64,
}

/// Constrained class: `L = ⌈c_L(log₂ n + log₂ d_Y)⌉`,
/// `p = ⌈c_p (n/d_Y)^{d_X/(2+d_X)}⌉`, `K = ⌈c_K p log₂ n⌉`, and
/// `κ = max{1, √d_Y L_{E_Y} R_Y, √d_X L_{E_X} R_X, L_{E_Y} L_{D_X} L_Ψ}`.
pub fn size_constrained(inp: &ConstrainedInputs, c: &SizingConstants) -> SizedArch {
    let nf = inp.n as f64;
    let dx = inp.d_x as f64;
    let dy = inp.d_y as f64;
    let depth = ceil_int(c.c_l * (log2(nf) + log2(dy))).max(2);
    let width = ceil_int(c.c_p * (nf / dy).powf(dx / (2.0 + dx))).max(1);
    let cardinality = ceil_int(c.c_k * width as f64 * log2(nf)).max(1);
    let clip = clip_bound(inp.d_y, inp.lip_ey, inp.r_y);
    let kappa = [
        1.0,
        clip,
        dx.sqrt() * inp.lip_ex * inp.r_x,
        inp.lip_ey * inp.lip_dx * inp.lip_psi,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    SizedArch {
        arch: ArchClass::Constrained {
            depth,
            width,
            cardinality,
            kappa,
            clip,
        },
        target_product: None,
        l_tilde: None,
        p_tilde: None,
    }
}

/// Per-head sizing for the multi-index architecture: the unconstrained rule
/// with the intrinsic dimension `d_0` in place of `d_X`.
pub fn size_multi_index(
    n: usize,
    d0: usize,
    d_y: usize,
    r_y: f64,
    lip_ey: f64,
    c: &SizingConstants,
) -> (MultiIndexSpec, SizedArch) {
    let sized = size_unconstrained(n, d0, d_y, r_y, lip_ey, c);
    let spec = MultiIndexSpec {
        d0,
        head_depth: sized.arch.depth(),
        head_width: sized.arch.width(),
        clip: sized.arch.clip(),
    };
    (spec, sized)
}
