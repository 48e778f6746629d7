//! Encode-learn-decode estimation of Lipschitz operators between function
//! spaces on `[-1, 1]^D`.
//!
//! Functions are stored by their values on a tensor Gauss–Legendre grid
//! ([`quadrature`]). Encoders map them to coefficient vectors, either against
//! a fixed orthonormal family ([`basis`]) or against empirical covariance
//! eigenfunctions ([`pca`]). A clipped ReLU network ([`fnn`]) is fit between
//! the encoded spaces by the two-stage procedure in [`train`], on data drawn
//! from the synthetic operators in [`problems`], and judged by the Monte Carlo
//! estimates in [`eval`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod fnn;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod problems;
pub mod quadrature;
pub mod train;

pub use error::{Error, Result};
