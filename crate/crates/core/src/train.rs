//! The two-stage learning algorithm: split the data, fit encoders on the
//! first half, then minimise the encoded-space empirical risk on the second.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisEncoder, BasisSpec};
use crate::error::{check_len, Error, Result};
use crate::fnn::{ceil_int, init_params, ArchClass, MultiIndexSpec, Network, TrainedNetwork};
use crate::par;
use crate::pca::{fit_pca, PcaModel, SnapshotSet};
use crate::problems::ProblemSpec;
use crate::quadrature::{GridFunction, QuadratureGrid};

pub type Pair = (GridFunction, GridFunction);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub problem: ProblemSpec,
}

impl DatasetMeta {
    pub fn operator_id(&self) -> &'static str {
        self.problem.operator.id()
    }

    pub fn sigma(&self) -> f64 {
        self.problem.noise.sigma
    }
}

/// Input/output pairs on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    grid: Arc<QuadratureGrid>,
    pairs: Vec<Pair>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(pairs: Vec<Pair>, meta: DatasetMeta) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::precondition("dataset needs at least two pairs"));
        }
        let grid = pairs[0].0.grid().clone();
        for (u, v) in &pairs {
            if !u.grid().same_as(&grid) || !v.grid().same_as(&grid) {
                return Err(Error::precondition("all dataset functions must share one grid"));
            }
        }
        Ok(Dataset { grid, pairs, meta })
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Positional split: `S1` is the first `⌈fraction · len⌉` pairs.
pub fn split(dataset: &Dataset, fraction: f64) -> Result<(&[Pair], &[Pair])> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::precondition("split fraction must lie in (0, 1)"));
    }
    let n = dataset.len();
    let k = ceil_int(fraction * n as f64);
    if k == 0 || k >= n {
        return Err(Error::precondition(format!(
            "split of {n} pairs at fraction {fraction} leaves an empty part"
        )));
    }
    Ok(dataset.pairs.split_at(k))
}

/// What Stage 1 should produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderChoice {
    Basis { x: BasisSpec, y: BasisSpec },
    Pca { d_x: usize, d_y: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderPair {
    Basis { x: BasisEncoder, y: BasisEncoder },
    Pca { x: PcaModel, y: PcaModel },
}

impl EncoderPair {
    pub fn d_x(&self) -> usize {
        match self {
            EncoderPair::Basis { x, .. } => x.encode_dim(),
            EncoderPair::Pca { x, .. } => x.encode_dim(),
        }
    }

    pub fn d_y(&self) -> usize {
        match self {
            EncoderPair::Basis { y, .. } => y.encode_dim(),
            EncoderPair::Pca { y, .. } => y.encode_dim(),
        }
    }

    /// Lipschitz constants of `(E_X, D_X, E_Y, D_Y)`: orthonormal-coefficient
    /// encoders are contractions and their decoders isometries.
    pub fn lipschitz_constants(&self) -> (f64, f64, f64, f64) {
        (1.0, 1.0, 1.0, 1.0)
    }

    pub fn encode_x(&self, u: &GridFunction) -> Result<Vec<f64>> {
        match self {
            EncoderPair::Basis { x, .. } => x.encode(u),
            EncoderPair::Pca { x, .. } => x.encode(u),
        }
    }

    pub fn encode_y(&self, v: &GridFunction) -> Result<Vec<f64>> {
        match self {
            EncoderPair::Basis { y, .. } => y.encode(v),
            EncoderPair::Pca { y, .. } => y.encode(v),
        }
    }

    pub fn decode_x(&self, a: &[f64]) -> Result<GridFunction> {
        match self {
            EncoderPair::Basis { x, .. } => x.decode(a),
            EncoderPair::Pca { x, .. } => x.decode(a),
        }
    }

    pub fn decode_y(&self, b: &[f64]) -> Result<GridFunction> {
        match self {
            EncoderPair::Basis { y, .. } => y.decode(b),
            EncoderPair::Pca { y, .. } => y.decode(b),
        }
    }

    pub fn project_x(&self, u: &GridFunction) -> Result<GridFunction> {
        self.decode_x(&self.encode_x(u)?)
    }

    pub fn project_y(&self, v: &GridFunction) -> Result<GridFunction> {
        self.decode_y(&self.encode_y(v)?)
    }
}

/// Stage 1. Basis encoders ignore `s1`; PCA fits `x` on the inputs and `y`
/// on the (noisy) outputs.
pub fn stage1(s1: &[Pair], choice: &EncoderChoice, grid: &Arc<QuadratureGrid>) -> Result<EncoderPair> {
    match choice {
        EncoderChoice::Basis { x, y } => Ok(EncoderPair::Basis {
            x: x.encoder(grid)?,
            y: y.encoder(grid)?,
        }),
        EncoderChoice::Pca { d_x, d_y } => {
            let need = (*d_x).max(*d_y);
            if s1.len() < need {
                return Err(Error::precondition(format!(
                    "PCA needs at least {need} snapshots, got {}",
                    s1.len()
                )));
            }
            let us = SnapshotSet::new(s1.iter().map(|p| p.0.clone()).collect())?;
            let vs = SnapshotSet::new(s1.iter().map(|p| p.1.clone()).collect())?;
            Ok(EncoderPair::Pca {
                x: fit_pca(&us, *d_x)?,
                y: fit_pca(&vs, *d_y)?,
            })
        }
    }
}

/// Encoded pairs `(E_X u_i, E_Y v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl EncodedDataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        check_len("encoded targets", inputs.len(), targets.len())?;
        if inputs.is_empty() {
            return Err(Error::precondition("encoded dataset is empty"));
        }
        let (dx, dy) = (inputs[0].len(), targets[0].len());
        for (a, b) in inputs.iter().zip(&targets) {
            check_len("encoded input", dx, a.len())?;
            check_len("encoded target", dy, b.len())?;
            if a.iter().chain(b).any(|v| !v.is_finite()) {
                return Err(Error::precondition("encoded dataset has non-finite entries"));
            }
        }
        Ok(EncodedDataset { inputs, targets })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_dim(&self) -> usize {
        self.targets[0].len()
    }
}

pub fn encode_dataset(s2: &[Pair], encoders: &EncoderPair) -> Result<EncodedDataset> {
    let rows = par::try_map_slice(s2, |(u, v)| {
        Ok::<_, Error>((encoders.encode_x(u)?, encoders.encode_y(v)?))
    })?;
    let (inputs, targets) = rows.into_iter().unzip();
    EncodedDataset::new(inputs, targets)
}

fn squared_residual(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(f, b)| (f - b) * (f - b)).sum()
}

/// `(1/n) Σ ‖Γ(a_i) − b_i‖²`.
pub fn empirical_risk<N: Network>(net: &N, data: &EncodedDataset) -> Result<f64> {
    check_len("network input", data.input_dim(), net.input_dim())?;
    check_len("network output", data.target_dim(), net.output_dim())?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let terms = par::try_map_slice(&idx, |&i| {
        Ok::<_, Error>(squared_residual(&net.forward(&data.inputs[i])?, &data.targets[i]))
    })?;
    Ok(terms.iter().sum::<f64>() / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            lr: 1e-3,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl Optimizer {
    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr, .. } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clamp_kappa: Option<f64>,
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::default(),
            batch_size: 32,
            epochs: 2000,
            seed: 0,
            clamp_kappa: None,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer.lr() > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        match self.optimizer {
            Optimizer::Sgd { momentum, .. } if !(0.0..1.0).contains(&momentum) => {
                return Err(Error::config("momentum must lie in [0, 1)"));
            }
            Optimizer::Adam { beta1, beta2, eps, .. }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                return Err(Error::config("Adam needs 0 <= beta < 1 and eps > 0"));
            }
            _ => {}
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::config("lr_decay must be positive"));
        }
        if let Some(k) = self.clamp_kappa {
            if !(k > 0.0) {
                return Err(Error::config("clamp_kappa must be positive"));
            }
        }
        Ok(())
    }
}

/// Heavy-ball SGD: `v ← μ v + g`, `θ ← θ − lr v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Adam with bias correction.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

enum OptState {
    Sgd(Vec<f64>),
    Adam(AdamState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub risk: f64,
    pub best_risk: f64,
}

/// Full-`S2` risk after every epoch; row 0 is the initialisation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn best_risk(&self) -> Option<f64> {
        self.rows.last().map(|r| r.best_risk)
    }

    pub fn final_risk(&self) -> Option<f64> {
        self.rows.last().map(|r| r.risk)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,risk\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.16e}", r.epoch, r.risk);
        }
        s
    }
}

/// Keeps the `k` largest-magnitude parameters (ties broken by index) and
/// zeroes the rest.
pub fn keep_largest(params: &mut [f64], k: usize) {
    if k >= params.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..params.len()).collect();
    idx.sort_by(|&a, &b| params[b].abs().total_cmp(&params[a].abs()).then(a.cmp(&b)));
    for &i in &idx[k..] {
        params[i] = 0.0;
    }
}

/// Constraints enforced after every optimiser step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Projection {
    pub kappa: Option<f64>,
    pub cardinality: Option<usize>,
}

/// Minibatch training from `init`, returning the best epoch-end snapshot.
pub fn train_network<N: Network>(
    init: N,
    data: &EncodedDataset,
    cfg: &TrainConfig,
    projection: Projection,
) -> Result<(N, TrainTrace)> {
    cfg.validate()?;
    let n = data.len();
    if n < cfg.batch_size {
        return Err(Error::precondition(format!(
            "training set of {n} pairs is smaller than batch size {}",
            cfg.batch_size
        )));
    }
    let mut net = init;
    let project = |net: &mut N| -> Result<()> {
        if let Some(k) = projection.kappa {
            net.clamp_params(k);
        }
        if let Some(card) = projection.cardinality {
            let mut p = net.flat_params();
            keep_largest(&mut p, card);
            net.set_flat_params(&p)?;
        }
        Ok(())
    };
    project(&mut net)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let np = net.param_count();
    let mut state = match cfg.optimizer {
        Optimizer::Sgd { .. } => OptState::Sgd(vec![0.0; np]),
        Optimizer::Adam { .. } => OptState::Adam(AdamState::new(np)),
    };

    let mut trace = TrainTrace::default();
    let risk0 = empirical_risk(&net, data)?;
    if !risk0.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            trace: trace.rows,
        });
    }
    trace.rows.push(TraceRow {
        epoch: 0,
        risk: risk0,
        best_risk: risk0,
    });
    let mut best = (risk0, net.clone());
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = cfg.optimizer.lr();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = 2.0 / batch.len() as f64;
            let grads = par::try_map_slice(batch, |&i| {
                let out = net.forward(&data.inputs[i])?;
                let up: Vec<f64> = out.iter().zip(&data.targets[i]).map(|(f, b)| scale * (f - b)).collect();
                net.param_gradient(&data.inputs[i], &up)
            })?;
            let mut g = vec![0.0; np];
            for gi in &grads {
                for (a, b) in g.iter_mut().zip(gi) {
                    *a += b;
                }
            }
            let mut p = net.flat_params();
            match (&mut state, cfg.optimizer) {
                (OptState::Sgd(vel), Optimizer::Sgd { momentum, .. }) => sgd_step(&mut p, &g, vel, lr, momentum),
                (OptState::Adam(st), Optimizer::Adam { beta1, beta2, eps, .. }) => {
                    adam_step(&mut p, &g, st, lr, beta1, beta2, eps)
                }
                _ => unreachable!("optimiser state matches config"),
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    trace: trace.rows,
                });
            }
            net.set_flat_params(&p)?;
            project(&mut net)?;
        }
        lr *= cfg.lr_decay;
        let risk = empirical_risk(&net, data)?;
        if !risk.is_finite() {
            return Err(Error::Divergence {
                epoch,
                trace: trace.rows,
            });
        }
        if risk < best.0 {
            best = (risk, net.clone());
        }
        trace.rows.push(TraceRow {
            epoch,
            risk,
            best_risk: best.0,
        });
    }
    Ok((best.1, trace))
}

/// Network family for Stage 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetworkSpec {
    Dense(ArchClass),
    MultiIndex(MultiIndexSpec),
}

/// Stage 2: initialise from `cfg.seed` and train. The constrained class
/// clamps to `κ` (or `cfg.clamp_kappa` when set) and keeps at most `K`
/// nonzero parameters after every step.
pub fn stage2(encoded: &EncodedDataset, spec: &NetworkSpec, cfg: &TrainConfig) -> Result<(TrainedNetwork, TrainTrace)> {
    let (dx, dy) = (encoded.input_dim(), encoded.target_dim());
    match spec {
        NetworkSpec::Dense(arch) => {
            let init = init_params(arch, dx, dy, cfg.seed)?;
            let projection = Projection {
                kappa: cfg.clamp_kappa.or(arch.kappa()),
                cardinality: match arch {
                    ArchClass::Constrained { cardinality, .. } => Some(*cardinality),
                    ArchClass::Unconstrained { .. } => None,
                },
            };
            let (net, trace) = train_network(init, encoded, cfg, projection)?;
            Ok((TrainedNetwork::Dense(net), trace))
        }
        NetworkSpec::MultiIndex(mi) => {
            let init = mi.init(dx, dy, cfg.seed)?;
            let projection = Projection {
                kappa: cfg.clamp_kappa,
                cardinality: None,
            };
            let (net, trace) = train_network(init, encoded, cfg, projection)?;
            Ok((TrainedNetwork::MultiIndex(net), trace))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisKind;
    use crate::fnn::{linear_network, FnnParams};
    use crate::problems::{InputLaw, NoiseLaw, OperatorSpec};
    use crate::quadrature::sample;
    use rand::Rng;

    fn meta() -> DatasetMeta {
        DatasetMeta {
            seed: 0,
            problem: ProblemSpec {
                operator: OperatorSpec::HeatSemigroup { time: 0.0, mode_cap: 3 },
                input: InputLaw::CoefficientDecay {
                    basis: BasisKind::Trigonometric,
                    order: 3,
                    amplitude: 1.0,
                    decay: 2.0,
                },
                noise: NoiseLaw::new(0.0, 3),
            },
        }
    }

    fn toy(n: usize) -> Dataset {
        let g = QuadratureGrid::new(1, 8).unwrap();
        let pairs = (0..n)
            .map(|i| {
                let c = i as f64;
                (sample(&g, |x| c * x[0]).unwrap(), sample(&g, |x| c + x[0]).unwrap())
            })
            .collect();
        Dataset::new(pairs, meta()).unwrap()
    }

    #[test]
    fn split_sizes() {
        let d = toy(10);
        let (a, b) = split(&d, 0.5).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let (a, b) = split(&d, 0.3).unwrap();
        assert_eq!((a.len(), b.len()), (3, 7));
        assert!(split(&d, 0.99).is_err());
        assert_eq!(a[2], d.pairs()[2]);
    }

    #[test]
    fn basis_stage1_ignores_data() {
        let d = toy(10);
        let g = d.grid().clone();
        let spec = BasisSpec::new(BasisKind::Legendre, 1, 3).unwrap();
        let choice = EncoderChoice::Basis { x: spec, y: spec };
        let a = stage1(&d.pairs()[..2], &choice, &g).unwrap();
        let b = stage1(&d.pairs()[5..], &choice, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn risk_examples() {
        let inputs = vec![vec![0.1, 0.2]; 4];
        let targets = vec![vec![1.0, 0.0]; 4];
        let data = EncodedDataset::new(inputs, targets).unwrap();
        let zero = FnnParams::zeros(&[2, 3, 2], 5.0).unwrap();
        assert_eq!(empirical_risk(&zero, &data).unwrap(), 1.0);
    }

    #[test]
    fn sgd_zero_gradient_and_bowl() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0; 2];
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.0);
        assert_eq!(p, vec![1.0, -2.0]);
        let mut w = [0.0];
        let mut v = [0.0];
        for _ in 0..200 {
            let g = [2.0 * (w[0] - 3.0)];
            sgd_step(&mut w, &g, &mut v, 0.1, 0.0);
        }
        assert!((w[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn adam_first_step_is_sign() {
        let mut p = vec![0.0; 3];
        let mut st = AdamState::new(3);
        adam_step(&mut p, &[0.5, -2.0, 1e-3], &mut st, 0.01, 0.9, 0.999, 1e-8);
        for (v, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - 0.01 * s).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_targets_stay_zero() {
        let data = EncodedDataset::new(vec![vec![0.3, -0.1]; 8], vec![vec![0.0]; 8]).unwrap();
        let zero = FnnParams::zeros(&[2, 4, 1], 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        let (net, trace) = train_network(zero.clone(), &data, &cfg, Projection::default()).unwrap();
        assert_eq!(trace.best_risk(), Some(0.0));
        assert_eq!(net, zero);
    }

    #[test]
    fn linear_target_is_learned_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = [0.4, -0.3, 0.1, 0.25];
        let inputs: Vec<Vec<f64>> = (0..256)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let targets = inputs
            .iter()
            .map(|x| vec![a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]])
            .collect();
        let data = EncodedDataset::new(inputs, targets).unwrap();
        let arch = ArchClass::Unconstrained {
            depth: 2,
            width: 16,
            clip: 4.0,
        };
        let cfg = TrainConfig {
            optimizer: Optimizer::Adam {
                lr: 1e-2,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            epochs: 500,
            seed: 11,
            ..Default::default()
        };
        let (_, t1) = stage2(&data, &NetworkSpec::Dense(arch), &cfg).unwrap();
        assert!(t1.best_risk().unwrap() < 1e-4, "{:?}", t1.best_risk());
        let (_, t2) = stage2(&data, &NetworkSpec::Dense(arch), &cfg).unwrap();
        assert_eq!(t1, t2);
        for w in t1.rows.windows(2) {
            assert!(w[1].best_risk <= w[0].best_risk);
        }
    }

    #[test]
    fn exact_linear_network_has_zero_risk() {
        let a = [0.4, -0.3, 0.1, 0.25];
        let net = linear_network(&a, 2, 2, 10.0).unwrap();
        let inputs = vec![vec![0.5, -1.0], vec![-0.2, 0.3]];
        let targets = inputs
            .iter()
            .map(|x| vec![a[0] * x[0] + a[1] * x[1], a[2] * x[0] + a[3] * x[1]])
            .collect();
        let data = EncodedDataset::new(inputs, targets).unwrap();
        assert!(empirical_risk(&net, &data).unwrap() < 1e-30);
    }

    #[test]
    fn constrained_projection_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let targets = inputs.iter().map(|x| vec![3.0 * x[0]]).collect();
        let data = EncodedDataset::new(inputs, targets).unwrap();
        let arch = ArchClass::Constrained {
            depth: 2,
            width: 8,
            cardinality: 10,
            kappa: 0.5,
            clip: 4.0,
        };
        let cfg = TrainConfig {
            epochs: 20,
            optimizer: Optimizer::Sgd {
                lr: 0.05,
                momentum: 0.5,
            },
            ..Default::default()
        };
        let (net, _) = stage2(&data, &NetworkSpec::Dense(arch), &cfg).unwrap();
        assert!(net.max_abs_param() <= 0.5);
        let nz = net.flat_params().iter().filter(|v| **v != 0.0).count();
        assert!(nz <= 10);
    }

    #[test]
    fn keep_largest_ties_by_index() {
        let mut p = vec![1.0, -3.0, 1.0, 0.5];
        keep_largest(&mut p, 2);
        assert_eq!(p, vec![1.0, -3.0, 0.0, 0.0]);
    }

    #[test]
    fn trace_csv_format() {
        let t = TrainTrace {
            rows: vec![TraceRow {
                epoch: 0,
                risk: 0.1,
                best_risk: 0.1,
            }],
        };
        assert_eq!(t.to_csv(), "epoch,risk\n0,1.0000000000000001e-1\n");
    }

    #[test]
    fn overflowing_risk_is_divergence() {
        let data = EncodedDataset::new(vec![vec![1.0]; 4], vec![vec![1e300]; 4]).unwrap();
        let arch = ArchClass::Unconstrained {
            depth: 2,
            width: 2,
            clip: 1.0,
        };
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 1,
            ..Default::default()
        };
        let err = stage2(&data, &NetworkSpec::Dense(arch), &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }
}
