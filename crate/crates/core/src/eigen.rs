use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi eigensolver for a row-major `n × n` symmetric matrix.
///
/// Rotations sweep every `(p, q)` pair in order until the off-diagonal
/// Frobenius norm drops below `1e-12 ‖A‖_F`.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<SymmetricEigen> {
    crate::error::check_len("symmetric matrix entries", n * n, a.len())?;
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !fro.is_finite() {
        return Err(Error::precondition("matrix has non-finite entries"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-10 * fro.max(1.0) {
                return Err(Error::precondition(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }

    let mut m = a.to_vec();
    // symmetrize exactly so rotations stay consistent
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let tol = 1e-12 * fro;
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&m) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Internal(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                // theta == 0 gives signum 1 and t = 1
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        converged = off(&m) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: ties keep their original diagonal position
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    Ok(SymmetricEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity() {
        let mut a = vec![0.0; 16];
        for i in 0..4 {
            a[i * 4 + i] = 1.0;
        }
        let e = symmetric_eigen(&a, 4).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn diagonal_sorted() {
        let a = [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0];
        let e = symmetric_eigen(&a, 3).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors[1], vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vectors[2], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two() {
        let e = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = &e.vectors[0];
        assert_abs_diff_eq!((v0[0] * r + v0[1] * r).abs(), 1.0, epsilon = 1e-14);
        let v1 = &e.vectors[1];
        assert_abs_diff_eq!((v1[0] * r - v1[1] * r).abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            symmetric_eigen(&[1.0, 2.0, 0.0, 1.0], 2),
            Err(Error::Precondition(_))
        ));
        assert!(symmetric_eigen(&[1.0, 2.0, 0.0], 2).is_err());
    }

    #[test]
    fn random_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 17, 40] {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let x: f64 = rng.gen_range(-1.0..1.0);
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                }
            }
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let e = symmetric_eigen(&a, n).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            for (lam, vec) in e.values.iter().zip(&e.vectors) {
                for i in 0..n {
                    let av: f64 = (0..n).map(|j| a[i * n + j] * vec[j]).sum();
                    assert!((av - lam * vec[i]).abs() < 1e-8 * norm);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let d: f64 = (0..n).map(|k| e.vectors[i][k] * e.vectors[j][k]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }
}
