//! Glue from a problem description to a trained, evaluated estimator.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, CellResult, Estimator, EvalReport};
use crate::fnn::{
    clip_bound, linear_network, size_constrained, size_multi_index, size_unconstrained, ArchClass, ConstrainedInputs,
    MultiIndexSpec, SizingConstants, TrainedNetwork,
};
use crate::problems::{Problem, ProblemSpec};
use crate::quadrature::QuadratureGrid;
use crate::train::{
    encode_dataset, split, stage1, stage2, Dataset, EncoderChoice, EncoderPair, NetworkSpec, TrainConfig, TrainTrace,
};

/// How Stage 2's network is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchPolicy {
    /// Sized from `n` with the unconstrained rule.
    Unconstrained {
        #[serde(default)]
        constants: SizingConstants,
    },
    /// Sized from `n` with the constrained rule (`κ` clamp, `K` nonzeros).
    Constrained {
        #[serde(default)]
        constants: SizingConstants,
    },
    /// Multi-index heads on a `d0`-dimensional projection, sized per head.
    MultiIndex {
        d0: usize,
        #[serde(default)]
        constants: SizingConstants,
    },
    /// Fixed unconstrained shape; the clip bound defaults to `√d_Y R_Y`.
    Explicit {
        depth: usize,
        width: usize,
        #[serde(default)]
        clip: Option<f64>,
    },
    /// Fixed multi-index shape.
    ExplicitMultiIndex {
        d0: usize,
        head_depth: usize,
        head_width: usize,
        #[serde(default)]
        clip: Option<f64>,
    },
    /// No training: the exact encoded map of a linear operator as a
    /// two-layer network (basis encoders only).
    ExactLinear,
}

/// Network chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedArch {
    Trained(NetworkSpec),
    ExactLinear { clip: f64 },
}

impl ResolvedArch {
    pub fn describe(&self) -> String {
        match self {
            ResolvedArch::Trained(NetworkSpec::Dense(ArchClass::Unconstrained { depth, width, clip })) => {
                format!("unconstrained L={depth} p={width} M={clip}")
            }
            ResolvedArch::Trained(NetworkSpec::Dense(ArchClass::Constrained {
                depth,
                width,
                cardinality,
                kappa,
                clip,
            })) => format!("constrained L={depth} p={width} M={clip} K={cardinality} kappa={kappa}"),
            ResolvedArch::Trained(NetworkSpec::MultiIndex(m)) => format!(
                "multi_index d0={} L={} p={} M={}",
                m.d0, m.head_depth, m.head_width, m.clip
            ),
            ResolvedArch::ExactLinear { clip } => format!("exact_linear L=2 M={clip}"),
        }
    }
}

/// Applies the policy for `n` training pairs.
pub fn resolve_arch(policy: &ArchPolicy, problem: &Problem, d_x: usize, d_y: usize, n: usize) -> Result<ResolvedArch> {
    let r_x = problem.input.radius();
    let lip_psi = problem.operator.lipschitz()?;
    let r_y = lip_psi * r_x;
    let clip = clip_bound(d_y, 1.0, r_y);
    if !(clip > 0.0) {
        return Err(Error::config("clip bound is zero; the input law has zero radius"));
    }
    let resolved = match *policy {
        ArchPolicy::Unconstrained { constants } => ResolvedArch::Trained(NetworkSpec::Dense(
            size_unconstrained(n, d_x, d_y, r_y, 1.0, &constants).arch,
        )),
        ArchPolicy::Constrained { constants } => {
            let inp = ConstrainedInputs {
                n,
                d_x,
                d_y,
                r_x,
                r_y,
                lip_ex: 1.0,
                lip_ey: 1.0,
                lip_dx: 1.0,
                lip_psi,
            };
            ResolvedArch::Trained(NetworkSpec::Dense(size_constrained(&inp, &constants).arch))
        }
        ArchPolicy::MultiIndex { d0, constants } => ResolvedArch::Trained(NetworkSpec::MultiIndex(
            size_multi_index(n, d0, d_y, r_y, 1.0, &constants).0,
        )),
        ArchPolicy::Explicit { depth, width, clip: c } => {
            ResolvedArch::Trained(NetworkSpec::Dense(ArchClass::Unconstrained {
                depth,
                width,
                clip: c.unwrap_or(clip),
            }))
        }
        ArchPolicy::ExplicitMultiIndex {
            d0,
            head_depth,
            head_width,
            clip: c,
        } => ResolvedArch::Trained(NetworkSpec::MultiIndex(MultiIndexSpec {
            d0,
            head_depth,
            head_width,
            clip: c.unwrap_or(clip),
        })),
        ArchPolicy::ExactLinear => ResolvedArch::ExactLinear { clip },
    };
    if let ResolvedArch::Trained(NetworkSpec::Dense(a)) = &resolved {
        a.validate()?;
    }
    if let ResolvedArch::Trained(NetworkSpec::MultiIndex(m)) = &resolved {
        m.validate()?;
    }
    Ok(resolved)
}

/// The exact encoded map `E_Y Ψ D_X` as a network.
pub fn exact_linear_estimator(problem: &Problem, encoders: EncoderPair, clip: f64) -> Result<Estimator> {
    let (x, y) = match &encoders {
        EncoderPair::Basis { x, y } => (x, y),
        EncoderPair::Pca { .. } => {
            return Err(Error::config("exact_linear requires basis encoders"));
        }
    };
    let a = problem.operator.encoded_linear_map(x, y)?;
    let net = linear_network(&a, x.encode_dim(), y.encode_dim(), clip)?;
    Estimator::new(encoders, TrainedNetwork::Dense(net))
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub estimator: Estimator,
    pub trace: TrainTrace,
    pub arch: ResolvedArch,
    /// Size of the Stage 2 half.
    pub n_train: usize,
}

impl Fitted {
    /// Best full-`S2` risk (0 for the exact map, which is not trained).
    pub fn train_risk(&self) -> f64 {
        self.trace.best_risk().unwrap_or(0.0)
    }
}

/// Split, Stage 1, encode `S2`, Stage 2.
pub fn fit_two_stage(
    dataset: &Dataset,
    problem: &Problem,
    encoders: &EncoderChoice,
    policy: &ArchPolicy,
    train: &TrainConfig,
    split_fraction: f64,
) -> Result<Fitted> {
    let (s1, s2) = split(dataset, split_fraction)?;
    let pair = stage1(s1, encoders, dataset.grid())?;
    let arch = resolve_arch(policy, problem, pair.d_x(), pair.d_y(), s2.len())?;
    match arch {
        ResolvedArch::ExactLinear { clip } => Ok(Fitted {
            estimator: exact_linear_estimator(problem, pair, clip)?,
            trace: TrainTrace::default(),
            arch,
            n_train: s2.len(),
        }),
        ResolvedArch::Trained(spec) => {
            let encoded = encode_dataset(s2, &pair)?;
            let (net, trace) = stage2(&encoded, &spec, train)?;
            Ok(Fitted {
                estimator: Estimator::new(pair, net)?,
                trace,
                arch,
                n_train: s2.len(),
            })
        }
    }
}

/// A whole experiment: problem, discretisation, encoders, network policy,
/// optimiser and evaluation size.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub dim: usize,
    pub grid_order: usize,
    pub problem: ProblemSpec,
    pub encoders: EncoderChoice,
    pub arch: ArchPolicy,
    pub train: TrainConfig,
    pub split_fraction: f64,
    pub n_test: usize,
}

impl Experiment {
    pub fn grid(&self) -> Result<Arc<QuadratureGrid>> {
        QuadratureGrid::new(self.dim, self.grid_order)
    }

    pub fn bind(&self) -> Result<Problem> {
        Problem::new(self.problem.clone(), &self.grid()?)
    }

    /// Generates `2n` pairs with `seed`, trains with `seed` and evaluates on
    /// the offset test stream.
    pub fn run(&self, problem: &Problem, n: usize, seed: u64) -> Result<(Fitted, EvalReport)> {
        let data = problem.generate(n, seed)?;
        let cfg = TrainConfig { seed, ..self.train };
        let fitted = fit_two_stage(&data, problem, &self.encoders, &self.arch, &cfg, self.split_fraction)?;
        let report = evaluate(&fitted.estimator, problem, self.n_test, seed)?;
        Ok((fitted, report))
    }

    pub fn cell(&self, problem: &Problem, n: usize, seed: u64) -> Result<CellResult> {
        let (fitted, r) = self.run(problem, n, seed)?;
        Ok(CellResult {
            gen_error: r.gen_error.mean,
            proj_x: r.proj_x.mean,
            proj_y: r.proj_y.mean,
            encoded_err: r.encoded_err.mean,
            train_risk: fitted.train_risk(),
        })
    }
}
