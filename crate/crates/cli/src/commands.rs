use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use opres_core::eval::{evaluate, fmt_real, rate_sweep, synthetic_cell, SweepRecord};
use opres_core::fnn::ArchClass;
use opres_core::fnn::{Network, TrainedNetwork};
use opres_core::pipeline::{fit_two_stage, ResolvedArch};
use opres_core::quadrature::norm;
use opres_core::train::{EncoderPair, NetworkSpec};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{self, Checkpoint};

/// Summary printed to stdout plus the process exit code.
pub struct Outcome {
    pub summary: String,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, exit_code: 0 }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunConfig::parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Path next to `base` with `suffix` appended to the file name.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn gen_data(cfg: &RunConfig, seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let exp = cfg.experiment();
    let problem = exp.bind()?;
    let ds = problem.generate(cfg.data.n, seed)?;
    io::write_file(out, &io::encode_dataset_file(&ds))?;
    let r_max = ds.pairs().iter().map(|(u, _)| norm(u)).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, "n_pairs = {}", ds.len());
    let _ = writeln!(s, "r_x_empirical_max = {}", fmt_real(r_max));
    let _ = writeln!(s, "r_x_bound = {}", fmt_real(problem.input.radius()));
    let _ = writeln!(s, "sigma = {}", fmt_real(cfg.problem.noise.sigma));
    let _ = writeln!(s, "wrote {}", out.display());
    Ok(Outcome::ok(s))
}

fn check_grid(cfg: &RunConfig, dim: usize, order: usize, what: &str) -> Result<(), CliError> {
    if dim != cfg.discretization.dim || order != cfg.grid_order() {
        return Err(CliError::Config(format!(
            "{what} grid is D={dim}, m={order} but the config asks for D={}, m={}",
            cfg.discretization.dim,
            cfg.grid_order()
        )));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, seed: u64, data: &Path, out: &Path) -> Result<Outcome, CliError> {
    let ds = io::decode_dataset_file(&io::read_file(data)?)?;
    check_grid(cfg, ds.grid().dim(), ds.grid().order(), "dataset")?;
    if ds.meta().problem != cfg.problem_spec() {
        return Err(CliError::Config(
            "problem: the dataset was generated from a different problem section".into(),
        ));
    }
    let exp = cfg.experiment();
    let problem = exp.bind()?;
    let fitted = fit_two_stage(
        &ds,
        &problem,
        &exp.encoders,
        &exp.arch,
        &cfg.train_config(seed),
        exp.split_fraction,
    )?;
    let arch = fitted.arch.describe();
    let ck = Checkpoint {
        estimator: fitted.estimator.clone(),
        arch: arch.clone(),
    };
    io::write_file(out, &io::encode_checkpoint(&ck))?;
    let trace_path = sibling(out, ".trace.csv");
    io::write_file(&trace_path, fitted.trace.to_csv().as_bytes())?;

    let net = &fitted.estimator.network;
    let mut s = String::new();
    let _ = writeln!(s, "architecture = {arch}");
    let _ = writeln!(s, "n_train = {}", fitted.n_train);
    let _ = writeln!(s, "param_count = {}", net.param_count());
    let _ = writeln!(s, "final_risk = {}", fmt_real(fitted.train_risk()));
    if let ResolvedArch::Trained(NetworkSpec::Dense(ArchClass::Constrained { kappa, cardinality, .. })) = fitted.arch {
        let nz = match net {
            TrainedNetwork::Dense(p) => p.count_nonzero(opres_core::fnn::NONZERO_THRESHOLD),
            TrainedNetwork::MultiIndex(_) => 0,
        };
        let _ = writeln!(
            s,
            "max_abs_param = {} (kappa = {})",
            fmt_real(net.max_abs_param()),
            fmt_real(kappa)
        );
        let _ = writeln!(s, "nonzero_params = {nz} (K = {cardinality})");
    }
    let _ = writeln!(s, "wrote {} and {}", out.display(), trace_path.display());
    Ok(Outcome::ok(s))
}

pub fn eval(cfg: &RunConfig, seed: u64, model: &Path, out: &Path) -> Result<Outcome, CliError> {
    let ck = io::decode_checkpoint(&io::read_file(model)?)?;
    let est = &ck.estimator;
    let grid = match &est.encoders {
        EncoderPair::Basis { x, .. } => x.grid().clone(),
        EncoderPair::Pca { x, .. } => x.grid().clone(),
    };
    check_grid(cfg, grid.dim(), grid.order(), "checkpoint")?;
    if est.encoders.d_x() != cfg.encoder.d_x || est.encoders.d_y() != cfg.encoder.d_y {
        return Err(CliError::Config(format!(
            "encoder: checkpoint has d_x={}, d_y={} but the config asks for d_x={}, d_y={}",
            est.encoders.d_x(),
            est.encoders.d_y(),
            cfg.encoder.d_x,
            cfg.encoder.d_y
        )));
    }
    let problem = cfg.experiment().bind()?;
    let r = evaluate(est, &problem, cfg.eval.n_test, seed)?;
    io::write_file(out, r.to_csv().as_bytes())?;
    let mut s = String::new();
    let _ = writeln!(s, "architecture = {}", ck.arch);
    let _ = writeln!(
        s,
        "gen_error = {} (se {})",
        fmt_real(r.gen_error.mean),
        fmt_real(r.gen_error.se)
    );
    let _ = writeln!(s, "relative_error = {}", fmt_real(r.relative_error()));
    let _ = writeln!(s, "proj_x = {}", fmt_real(r.proj_x.mean));
    let _ = writeln!(s, "proj_y = {}", fmt_real(r.proj_y.mean));
    let _ = writeln!(s, "encoded_err = {}", fmt_real(r.encoded_err.mean));
    let _ = writeln!(s, "decomposition_slack = {}", fmt_real(r.slack));
    let _ = writeln!(s, "wrote {}", out.display());
    Ok(Outcome::ok(s))
}

pub fn sweep(cfg: &RunConfig, seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let seeds: Vec<u64> = cfg.sweep.seeds.iter().map(|s| seed.wrapping_add(*s)).collect();
    let ns = &cfg.sweep.n_values;
    let record: SweepRecord = match cfg.sweep.synthetic {
        Some(p) => rate_sweep(ns, &seeds, cfg.sweep.wall_time, synthetic_cell(p.constant, p.exponent))?,
        None => {
            let exp = cfg.experiment();
            let problem = exp.bind()?;
            rate_sweep(ns, &seeds, cfg.sweep.wall_time, |n, s| exp.cell(&problem, n, s))?
        }
    };
    io::write_file(out, record.to_csv().as_bytes())?;
    let svg = out.with_extension("svg");
    io::write_file(&svg, record.to_svg().as_bytes())?;

    let mut s = String::new();
    for (n, m) in &record.medians {
        let _ = writeln!(s, "n = {n}: median gen_error = {}", fmt_real(*m));
    }
    match record.fit {
        Some((slope, intercept, _)) => {
            let _ = writeln!(s, "slope = {}", fmt_real(slope));
            let _ = writeln!(s, "intercept = {}", fmt_real(intercept));
        }
        None => {
            let _ = writeln!(s, "slope = unavailable");
        }
    }
    for r in record.flagged() {
        let msg = r.result.as_ref().err().map(String::as_str).unwrap_or_default();
        let _ = writeln!(s, "flagged n = {} seed = {}: {msg}", r.n, r.seed);
    }
    let _ = writeln!(s, "wrote {} and {}", out.display(), svg.display());
    let ok = record.success_count();
    let exit_code = if 2 * ok >= record.rows.len() { 0 } else { 4 };
    Ok(Outcome { summary: s, exit_code })
}
