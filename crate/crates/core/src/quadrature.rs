//! Tensor-product Gauss–Legendre grids on `[-1,1]^D` and the L² arithmetic on
//! functions sampled at their nodes.
//!
//! Tensor points are stored in lexicographic axis order: the flat index of the
//! point with per-axis indices `(i_0, …, i_{D-1})` is `Σ_j i_j m^{D-1-j}`, so
//! the first axis varies slowest. All inner products accumulate in that order.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Returns `(P_m(x), P_m'(x))` for the unnormalized Legendre polynomial.
fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let mf = m as f64;
    let dp = mf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes (ascending) and weights of the `m`-point Gauss–Legendre rule.
pub fn gauss_legendre_rule(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::precondition("quadrature order must be at least 1"));
    }
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    // Roots come in ± pairs; solve for the non-negative half only.
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Internal(format!(
                "Newton iteration for Gauss-Legendre root {i} of order {m} did not converge"
            )));
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // odd m: exact zero at the middle
        if 2 * i + 1 == m {
            x = 0.0;
        }
        nodes[m - 1 - i] = x;
        nodes[i] = -x;
        weights[m - 1 - i] = w;
        weights[i] = w;
    }
    Ok((nodes, weights))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    dim: usize,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    tensor_weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(dim: usize, order: usize) -> Result<Arc<Self>> {
        if dim == 0 {
            return Err(Error::precondition("grid dimension must be at least 1"));
        }
        let len = order
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::precondition("grid too large"))?;
        let (nodes, weights) = gauss_legendre_rule(order)?;
        let mut tensor_weights = vec![1.0; len];
        let mut idx = vec![0usize; dim];
        for (flat, tw) in tensor_weights.iter_mut().enumerate() {
            split_index(flat, order, &mut idx);
            *tw = idx.iter().map(|&i| weights[i]).product();
        }
        Ok(Arc::new(QuadratureGrid {
            dim,
            order,
            nodes,
            weights,
            tensor_weights,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Product of the axis weights at every tensor point.
    pub fn tensor_weights(&self) -> &[f64] {
        &self.tensor_weights
    }

    /// Number of tensor points, `m^D`.
    pub fn len(&self) -> usize {
        self.tensor_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor_weights.is_empty()
    }

    /// Writes the per-axis node indices of a flat point index into `out`.
    pub fn axis_indices(&self, flat: usize, out: &mut [usize]) {
        split_index(flat, self.order, out);
    }

    /// Coordinates of the flat point index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.axis_indices(flat, &mut idx);
        idx.iter().map(|&i| self.nodes[i]).collect()
    }

    /// Grids are interchangeable when dimension and order agree.
    pub fn same_as(&self, other: &QuadratureGrid) -> bool {
        std::ptr::eq(self, other) || (self.dim == other.dim && self.order == other.order)
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        crate::error::check_len("grid values", self.len(), values.len())?;
        Ok(values
            .iter()
            .zip(&self.tensor_weights)
            .fold(0.0, |acc, (v, w)| acc + v * w))
    }
}

/// Samples `f` at every tensor point.
pub fn sample(grid: &Arc<QuadratureGrid>, f: impl Fn(&[f64]) -> f64) -> Result<GridFunction> {
    let mut x = vec![0.0; grid.dim];
    let mut idx = vec![0; grid.dim];
    let mut values = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        grid.axis_indices(flat, &mut idx);
        for (xj, &ij) in x.iter_mut().zip(&idx) {
            *xj = grid.nodes[ij];
        }
        values.push(f(&x));
    }
    GridFunction::new(grid.clone(), values)
}

fn split_index(mut flat: usize, order: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % order;
        flat /= order;
    }
}

/// A real function on `[-1,1]^D` represented by its values at the tensor
/// Gauss–Legendre nodes of a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<QuadratureGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<QuadratureGrid>, values: Vec<f64>) -> Result<Self> {
        crate::error::check_len("grid function values", grid.len(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::precondition(format!(
                "grid function value at point {i} is not finite"
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: &Arc<QuadratureGrid>) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what: "grid points",
                expected: self.grid.len(),
                found: other.grid.len(),
            })
        }
    }
}

/// `Σ_p f(p) g(p) w(p)` accumulated in lexicographic point order.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_same_grid(g)?;
    Ok(weighted_dot(&f.values, &g.values, f.grid.tensor_weights()))
}

pub(crate) fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, y), wi) in a.iter().zip(b).zip(w) {
        acc += x * y * wi;
    }
    acc
}

pub fn norm(f: &GridFunction) -> f64 {
    weighted_dot(&f.values, &f.values, f.grid.tensor_weights())
        .max(0.0)
        .sqrt()
}

/// `α f + g` pointwise.
pub fn axpy(alpha: f64, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    f.check_same_grid(g)?;
    Ok(GridFunction {
        grid: f.grid.clone(),
        values: f.values.iter().zip(&g.values).map(|(a, b)| alpha * a + b).collect(),
    })
}

pub fn distance(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    Ok(squared_distance(f, g)?.sqrt())
}

/// `‖f − g‖²` without forming the difference.
pub fn squared_distance(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_same_grid(g)?;
    let mut acc = 0.0;
    for ((a, b), w) in f.values.iter().zip(&g.values).zip(f.grid.tensor_weights()) {
        let d = a - b;
        acc += d * d * w;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_point_rule_is_midpoint() {
        let (x, w) = gauss_legendre_rule(1).unwrap();
        assert_eq!(x, vec![0.0]);
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn two_point_rule_closed_form() {
        let (x, w) = gauss_legendre_rule(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(x[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], r, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eight_point_rule_integrates_x14() {
        let (x, w) = gauss_legendre_rule(8).unwrap();
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_abs_diff_eq!(q, 2.0 / 15.0, epsilon = 1e-12);
    }

    #[test]
    fn rule_invariants_up_to_256() {
        for m in [1, 3, 7, 16, 33, 64, 128, 256] {
            let (x, w) = gauss_legendre_rule(m).unwrap();
            let s: f64 = w.iter().sum();
            assert_abs_diff_eq!(s, 2.0, epsilon = 1e-12);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            assert!(w.iter().all(|&w| w > 0.0));
            for i in 0..m {
                assert!((x[i] + x[m - 1 - i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_order_rejected() {
        assert!(gauss_legendre_rule(0).is_err());
        assert!(QuadratureGrid::new(0, 4).is_err());
    }

    #[test]
    fn constant_inner_products() {
        for m in [1, 5, 12] {
            let g = QuadratureGrid::new(1, m).unwrap();
            let one = sample(&g, |_| 1.0).unwrap();
            assert_abs_diff_eq!(inner_product(&one, &one).unwrap(), 2.0, epsilon = 1e-12);
        }
        let g = QuadratureGrid::new(2, 6).unwrap();
        let one = sample(&g, |_| 1.0).unwrap();
        assert_abs_diff_eq!(inner_product(&one, &one).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn sine_norms() {
        let g = QuadratureGrid::new(1, 32).unwrap();
        let s = sample(&g, |x| (PI * x[0]).sin()).unwrap();
        assert_abs_diff_eq!(inner_product(&s, &s).unwrap(), 1.0, epsilon = 1e-10);
        let neg = s.scaled(-1.0);
        assert_abs_diff_eq!(distance(&s, &neg).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn norm_axpy_basics() {
        let g = QuadratureGrid::new(2, 4).unwrap();
        let z = GridFunction::zeros(&g);
        assert_eq!(norm(&z), 0.0);
        let f = sample(&g, |x| x[0] - 2.0 * x[1]).unwrap();
        let h = axpy(2.0, &f, &f).unwrap();
        for (a, b) in h.values().iter().zip(f.values()) {
            assert_eq!(*a, 3.0 * b);
        }
    }

    #[test]
    fn lexicographic_layout() {
        let g = QuadratureGrid::new(2, 3).unwrap();
        let p = g.point(5); // (1, 2)
        assert_eq!(p, vec![g.nodes()[1], g.nodes()[2]]);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = QuadratureGrid::new(1, 4).unwrap();
        let b = QuadratureGrid::new(1, 5).unwrap();
        let f = GridFunction::zeros(&a);
        let g = GridFunction::zeros(&b);
        assert!(matches!(inner_product(&f, &g), Err(Error::DimensionMismatch { .. })));
        assert!(axpy(1.0, &f, &g).is_err());
        assert!(distance(&f, &g).is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = QuadratureGrid::new(1, 2).unwrap();
        assert!(GridFunction::new(g.clone(), vec![0.0, f64::NAN]).is_err());
        assert!(GridFunction::new(g, vec![0.0]).is_err());
    }
}
