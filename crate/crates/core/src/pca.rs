//! Data-driven PCA encoders built from the empirical covariance operator of a
//! snapshot set, computed with the method of snapshots.

use std::sync::Arc;

use crate::eigen::symmetric_eigen;
use crate::error::{check_len, Error, Result};
use crate::quadrature::{inner_product, norm, GridFunction, QuadratureGrid};

/// Eigenvalues below this are treated as zero when counting the rank.
pub const RANK_TOL: f64 = 1e-12;

/// Snapshots sharing a single grid.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    grid: Arc<QuadratureGrid>,
    functions: Vec<GridFunction>,
}

impl SnapshotSet {
    pub fn new(functions: Vec<GridFunction>) -> Result<Self> {
        let first = functions
            .first()
            .ok_or_else(|| Error::precondition("snapshot set must be non-empty"))?;
        let grid = first.grid().clone();
        if let Some(f) = functions.iter().find(|f| !f.grid().same_as(&grid)) {
            return Err(Error::DimensionMismatch {
                what: "snapshot grid points",
                expected: grid.len(),
                found: f.grid().len(),
            });
        }
        Ok(SnapshotSet { grid, functions })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[GridFunction] {
        &self.functions
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    encode_dim: usize,
    /// `λ_1 ≥ … ≥ λ_{d+1}`; padded with zeros when fewer snapshots exist.
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<GridFunction>,
    trailing_energy: f64,
}

impl PcaModel {
    /// Reassembles a model from stored parts (used when loading checkpoints).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenfunctions: Vec<GridFunction>, trailing_energy: f64) -> Result<Self> {
        let d = eigenfunctions.len();
        if d == 0 {
            return Err(Error::precondition("PCA model needs at least one eigenfunction"));
        }
        check_len("PCA eigenvalues", d + 1, eigenvalues.len())?;
        let grid = eigenfunctions[0].grid();
        if eigenfunctions.iter().any(|f| !f.grid().same_as(grid)) {
            return Err(Error::precondition("PCA eigenfunctions must share a grid"));
        }
        Ok(PcaModel {
            encode_dim: d,
            eigenvalues,
            eigenfunctions,
            trailing_energy,
        })
    }

    pub fn encode_dim(&self) -> usize {
        self.encode_dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[GridFunction] {
        &self.eigenfunctions
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        self.eigenfunctions[0].grid()
    }

    /// `λ_d − λ_{d+1}`.
    pub fn spectral_gap(&self) -> f64 {
        self.eigenvalues[self.encode_dim - 1] - self.eigenvalues[self.encode_dim]
    }

    /// `Σ_{k>d} λ_k`: the mean squared reconstruction error on the fitting set.
    pub fn trailing_energy(&self) -> f64 {
        self.trailing_energy
    }

    pub fn encode(&self, u: &GridFunction) -> Result<Vec<f64>> {
        self.eigenfunctions.iter().map(|phi| inner_product(u, phi)).collect()
    }

    pub fn decode(&self, coeffs: &[f64]) -> Result<GridFunction> {
        check_len("PCA coefficients", self.encode_dim, coeffs.len())?;
        let grid = self.grid();
        let mut values = vec![0.0; grid.len()];
        for (phi, &a) in self.eigenfunctions.iter().zip(coeffs) {
            for (v, p) in values.iter_mut().zip(phi.values()) {
                *v += a * p;
            }
        }
        GridFunction::new(grid.clone(), values)
    }

    pub fn project(&self, u: &GridFunction) -> Result<GridFunction> {
        self.decode(&self.encode(u)?)
    }
}

/// Fits the top-`d` eigenpairs of `G = (1/n) Σ u_i ⊗ u_i`.
///
/// The Gram matrix `K_ij = ⟨u_i, u_j⟩ / n` shares its nonzero spectrum with
/// `G`; each eigenvector `c_k` of `K` maps to the eigenfunction
/// `Σ_i c_{ik} u_i`, normalised to unit norm.
pub fn fit_pca(snapshots: &SnapshotSet, d: usize) -> Result<PcaModel> {
    let n = snapshots.len();
    if d == 0 {
        return Err(Error::precondition("PCA dimension must be positive"));
    }
    if d > n {
        return Err(Error::precondition(format!(
            "PCA dimension {d} exceeds snapshot count {n}"
        )));
    }
    let us = snapshots.functions();
    let nf = n as f64;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let entries = crate::par::map_slice(&pairs, |&(i, j)| {
        inner_product(&us[i], &us[j]).expect("snapshots share a grid") / nf
    });
    let mut k = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(entries) {
        k[i * n + j] = v;
        k[j * n + i] = v;
    }
    let eig = symmetric_eigen(&k, n)?;

    let mut values = eig.values;
    let scale = values.first().copied().unwrap_or(0.0).abs().max(1.0);
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-8 * scale {
                return Err(Error::Internal(format!(
                    "covariance eigenvalue {v:e} is significantly negative"
                )));
            }
            *v = 0.0;
        }
    }
    let effective = values.iter().filter(|&&v| v > RANK_TOL).count();
    if effective < d {
        return Err(Error::RankDeficient {
            requested: d,
            effective,
        });
    }

    let grid = snapshots.grid();
    let mut eigenfunctions = Vec::with_capacity(d);
    for c in eig.vectors.iter().take(d) {
        let mut vals = vec![0.0; grid.len()];
        for (u, &ci) in us.iter().zip(c) {
            for (v, x) in vals.iter_mut().zip(u.values()) {
                *v += ci * x;
            }
        }
        let f = GridFunction::new(grid.clone(), vals)?;
        let nrm = norm(&f);
        let mut f = f.scaled(1.0 / nrm);
        // sign convention: largest-magnitude grid value is positive
        let (_, peak) =
            f.values().iter().enumerate().fold(
                (0, 0.0f64),
                |best, (i, &v)| {
                    if v.abs() > best.1.abs() {
                        (i, v)
                    } else {
                        best
                    }
                },
            );
        if peak < 0.0 {
            f = f.scaled(-1.0);
        }
        eigenfunctions.push(f);
    }

    let trailing_energy = values.iter().skip(d).sum();
    let mut stored: Vec<f64> = values.iter().take(d + 1).copied().collect();
    stored.resize(d + 1, 0.0);
    PcaModel::from_parts(stored, eigenfunctions, trailing_energy)
}

pub fn pca_encode(model: &PcaModel, u: &GridFunction) -> Result<Vec<f64>> {
    model.encode(u)
}

pub fn pca_decode(model: &PcaModel, coeffs: &[f64]) -> Result<GridFunction> {
    model.decode(coeffs)
}

pub fn pca_project(model: &PcaModel, u: &GridFunction) -> Result<GridFunction> {
    model.project(u)
}
