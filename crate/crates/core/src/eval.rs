//! Monte Carlo generalization error, its decomposition into network and
//! projection terms, rate sweeps over the sample size, and log-log fits.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::fnn::{Network, TrainedNetwork};
use crate::par;
use crate::problems::Problem;
use crate::quadrature::{squared_distance, GridFunction};
use crate::train::EncoderPair;

/// Offset between a training seed and its test stream.
pub const TEST_SEED_OFFSET: u64 = 1_000_000;

/// `Ψ_NN = D_Y ∘ Γ ∘ E_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub encoders: EncoderPair,
    pub network: TrainedNetwork,
}

impl Estimator {
    pub fn new(encoders: EncoderPair, network: TrainedNetwork) -> Result<Self> {
        check_len("network input", encoders.d_x(), network.input_dim())?;
        check_len("network output", encoders.d_y(), network.output_dim())?;
        Ok(Estimator { encoders, network })
    }

    pub fn predict_encoded(&self, u: &GridFunction) -> Result<Vec<f64>> {
        self.network.forward(&self.encoders.encode_x(u)?)
    }

    pub fn predict(&self, u: &GridFunction) -> Result<GridFunction> {
        self.encoders.decode_y(&self.predict_encoded(u)?)
    }
}

pub fn predict(est: &Estimator, u: &GridFunction) -> Result<GridFunction> {
    est.predict(u)
}

/// Fresh inputs for a training seed: the stream is offset so it never
/// coincides with a training stream of a nearby seed.
pub fn test_inputs(problem: &Problem, n_test: usize, seed: u64) -> Result<Vec<GridFunction>> {
    if n_test == 0 {
        return Err(Error::precondition("n_test must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(TEST_SEED_OFFSET));
    (0..n_test).map(|_| problem.input.sample(&mut rng)).collect()
}

/// Mean and standard error of a sample, summed in index order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanSe {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub gen_error: MeanSe,
    pub proj_x: MeanSe,
    pub proj_y: MeanSe,
    /// `E‖Γ(E_X u) − E_Y Ψ(u)‖²`.
    pub encoded_err: MeanSe,
    /// `E‖Ψ(u)‖²`, the scale for relative errors.
    pub target_energy: MeanSe,
    /// Right side minus left side of
    /// `E‖Ψ_NN u − Ψu‖² ≤ 2E‖D_YΓE_X u − D_YE_YΨu‖² + 2E‖Π_YΨu − Ψu‖²`.
    pub slack: f64,
    /// Smallest per-sample slack.
    pub min_pointwise_slack: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn relative_error(&self) -> f64 {
        (self.gen_error.mean / self.target_energy.mean).sqrt()
    }

    pub const CSV_HEADER: &'static str = "n_test,seed,gen_error,gen_se,proj_x,proj_x_se,proj_y,proj_y_se,encoded_err,encoded_se,target_energy,slack,min_pointwise_slack";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_test,
            self.seed,
            fmt_real(self.gen_error.mean),
            fmt_real(self.gen_error.se),
            fmt_real(self.proj_x.mean),
            fmt_real(self.proj_x.se),
            fmt_real(self.proj_y.mean),
            fmt_real(self.proj_y.se),
            fmt_real(self.encoded_err.mean),
            fmt_real(self.encoded_err.se),
            fmt_real(self.target_energy.mean),
            fmt_real(self.slack),
            fmt_real(self.min_pointwise_slack),
        );
        s
    }
}

/// 17 significant digits, round-trippable.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

struct Terms {
    gen: f64,
    proj_x: f64,
    proj_y: f64,
    encoded: f64,
    energy: f64,
    rhs: f64,
}

fn sample_terms(est: &Estimator, problem: &Problem, u: &GridFunction) -> Result<Terms> {
    let w = problem.operator.apply(u)?;
    let enc = &est.encoders;
    let a = enc.encode_x(u)?;
    let out = est.network.forward(&a)?;
    let pred = enc.decode_y(&out)?;
    let b = enc.encode_y(&w)?;
    let proj_w = enc.decode_y(&b)?;
    let gen = squared_distance(&pred, &w)?;
    let proj_y = squared_distance(&proj_w, &w)?;
    let encoded: f64 = out.iter().zip(&b).map(|(f, t)| (f - t) * (f - t)).sum();
    let net_term = squared_distance(&pred, &proj_w)?;
    Ok(Terms {
        gen,
        proj_x: squared_distance(&enc.project_x(u)?, u)?,
        proj_y,
        encoded,
        energy: squared_distance(&w, &GridFunction::zeros(w.grid()))?,
        rhs: 2.0 * net_term + 2.0 * proj_y,
    })
}

/// Every error estimate on one shared test stream.
pub fn evaluate(est: &Estimator, problem: &Problem, n_test: usize, seed: u64) -> Result<EvalReport> {
    let inputs = test_inputs(problem, n_test, seed)?;
    let terms = par::try_map_slice(&inputs, |u| sample_terms(est, problem, u))?;
    let col = |f: fn(&Terms) -> f64| terms.iter().map(f).collect::<Vec<f64>>();
    let gen = col(|t| t.gen);
    let rhs = col(|t| t.rhs);
    let slack = rhs.iter().sum::<f64>() / n_test as f64 - gen.iter().sum::<f64>() / n_test as f64;
    let min_pointwise_slack = rhs.iter().zip(&gen).map(|(r, l)| r - l).fold(f64::INFINITY, f64::min);
    Ok(EvalReport {
        gen_error: MeanSe::of(&gen),
        proj_x: MeanSe::of(&col(|t| t.proj_x)),
        proj_y: MeanSe::of(&col(|t| t.proj_y)),
        encoded_err: MeanSe::of(&col(|t| t.encoded)),
        target_energy: MeanSe::of(&col(|t| t.energy)),
        slack,
        min_pointwise_slack,
        n_test,
        seed,
    })
}

pub fn generalization_error(est: &Estimator, problem: &Problem, n_test: usize, seed: u64) -> Result<f64> {
    let inputs = test_inputs(problem, n_test, seed)?;
    let errs = par::try_map_slice(&inputs, |u| {
        squared_distance(&est.predict(u)?, &problem.operator.apply(u)?)
    })?;
    Ok(errs.iter().sum::<f64>() / n_test as f64)
}

/// `(E‖Π_X u − u‖², E‖Π_Y Ψu − Ψu‖²)` on the test stream.
pub fn projection_errors(encoders: &EncoderPair, problem: &Problem, n_test: usize, seed: u64) -> Result<(f64, f64)> {
    let inputs = test_inputs(problem, n_test, seed)?;
    let terms = par::try_map_slice(&inputs, |u| {
        let w = problem.operator.apply(u)?;
        Ok::<_, Error>((
            squared_distance(&encoders.project_x(u)?, u)?,
            squared_distance(&encoders.project_y(&w)?, &w)?,
        ))
    })?;
    let n = n_test as f64;
    Ok((
        terms.iter().map(|t| t.0).sum::<f64>() / n,
        terms.iter().map(|t| t.1).sum::<f64>() / n,
    ))
}

pub fn check_decomposition(est: &Estimator, problem: &Problem, n_test: usize, seed: u64) -> Result<f64> {
    Ok(evaluate(est, problem, n_test, seed)?.slack)
}

/// Ordinary least squares on `(ln n, ln y)`; returns `(slope, intercept,
/// residual sum of squares)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::precondition("slope fit needs at least two points"));
    }
    if let Some(&(n, y)) = points.iter().find(|(n, y)| !(*y > 0.0) || !(*n > 0.0)) {
        return Err(Error::precondition(format!(
            "slope fit needs positive values, got ({n}, {y})"
        )));
    }
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::precondition("slope fit needs distinct n values"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok((slope, intercept, residual))
}

/// Outcome of one `(n, seed)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub gen_error: f64,
    pub proj_x: f64,
    pub proj_y: f64,
    pub encoded_err: f64,
    pub train_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub result: std::result::Result<CellResult, String>,
    pub wall_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub rows: Vec<SweepRow>,
    /// `(n, median gen_error over successful seeds)`, ascending in `n`.
    pub medians: Vec<(usize, f64)>,
    pub means: Vec<(usize, f64)>,
    pub fit: Option<(f64, f64, f64)>,
}

impl SweepRecord {
    pub const CSV_HEADER: &'static str = "n,seed,gen_error,proj_x,proj_y,encoded_err,train_risk,wall_ms";

    pub fn from_rows(mut rows: Vec<SweepRow>) -> Result<Self> {
        rows.sort_by(|a, b| a.n.cmp(&b.n).then(a.seed.cmp(&b.seed)));
        let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
        ns.dedup();
        let mut medians = Vec::new();
        let mut means = Vec::new();
        for &n in &ns {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| r.result.as_ref().ok().map(|c| c.gen_error))
                .collect();
            if v.is_empty() {
                continue;
            }
            means.push((n, v.iter().sum::<f64>() / v.len() as f64));
            v.sort_by(f64::total_cmp);
            let k = v.len();
            let med = if k % 2 == 1 {
                v[k / 2]
            } else {
                0.5 * (v[k / 2 - 1] + v[k / 2])
            };
            medians.push((n, med));
        }
        let pts: Vec<(f64, f64)> = medians.iter().map(|&(n, y)| (n as f64, y)).collect();
        let fit = if pts.len() >= 2 && pts.iter().all(|p| p.1 > 0.0) {
            Some(fit_loglog_slope(&pts)?)
        } else {
            None
        };
        Ok(SweepRecord {
            rows,
            medians,
            means,
            fit,
        })
    }

    pub fn success_count(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_ok()).count()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.result.is_err())
    }

    /// Failed cells keep their row with `NaN` metrics.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let c = r.result.as_ref().ok();
            let f = |g: fn(&CellResult) -> f64| c.map_or_else(|| "NaN".to_string(), |c| fmt_real(g(c)));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.seed,
                f(|c| c.gen_error),
                f(|c| c.proj_x),
                f(|c| c.proj_y),
                f(|c| c.encoded_err),
                f(|c| c.train_risk),
                r.wall_ms.map_or_else(|| "NA".to_string(), |w| w.to_string()),
            );
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let points: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(|c| (r.n as f64, c.gen_error)))
            .filter(|p| p.1 > 0.0)
            .collect();
        let line: Vec<(f64, f64)> = self
            .medians
            .iter()
            .filter(|m| m.1 > 0.0)
            .map(|&(n, y)| (n as f64, y))
            .collect();
        loglog_svg(&points, &line, "n", "generalization error")
    }
}

/// Runs every `(n, seed)` cell (in parallel when enabled) and merges the
/// rows in sorted key order. `wall_time` controls whether cell timings are
/// recorded; they are excluded by default so output is reproducible.
pub fn rate_sweep<F>(ns: &[usize], seeds: &[u64], wall_time: bool, cell: F) -> Result<SweepRecord>
where
    F: Fn(usize, u64) -> Result<CellResult> + Sync,
{
    let mut distinct = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::precondition("rate sweep needs at least 3 distinct n values"));
    }
    if seeds.is_empty() {
        return Err(Error::precondition("rate sweep needs at least one seed"));
    }
    let keys: Vec<(usize, u64)> = distinct
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows = par::map_slice(&keys, |&(n, seed)| {
        let start = std::time::Instant::now();
        let result = cell(n, seed).map_err(|e| e.to_string());
        SweepRow {
            n,
            seed,
            result,
            wall_ms: wall_time.then(|| start.elapsed().as_millis() as u64),
        }
    });
    SweepRecord::from_rows(rows)
}

/// Cell function for the synthetic power-law mode `y = c · n^exponent`.
pub fn synthetic_cell(constant: f64, exponent: f64) -> impl Fn(usize, u64) -> Result<CellResult> + Sync {
    move |n, _| {
        let y = constant * (n as f64).powf(exponent);
        Ok(CellResult {
            gen_error: y,
            proj_x: 0.0,
            proj_y: 0.0,
            encoded_err: y,
            train_risk: 0.0,
        })
    }
}

/// Log-log scatter plus polyline, with decade ticks on both axes.
pub fn loglog_svg(points: &[(f64, f64)], line: &[(f64, f64)], xlabel: &str, ylabel: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 70.0;
    let all: Vec<(f64, f64)> = points.iter().chain(line).copied().collect();
    let (lx0, lx1, ly0, ly1) = if all.is_empty() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let lx = all.iter().map(|p| p.0.log10());
        let ly = all.iter().map(|p| p.1.log10());
        let (a, b) = lx.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (c, d) = ly.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        (
            a.floor(),
            b.ceil().max(a.floor() + 1.0),
            c.floor(),
            d.ceil().max(c.floor() + 1.0),
        )
    };
    let sx = |x: f64| PAD + (x.log10() - lx0) / (lx1 - lx0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y.log10() - ly0) / (ly1 - ly0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{PAD}" y1="{}" x2="{}" y2="{}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}"/></g>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    for e in (lx0 as i32)..=(lx1 as i32) {
        let x = sx(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle">1e{e}</text>"#,
            H - PAD,
            H - PAD + 6.0,
            H - PAD + 22.0
        );
    }
    for e in (ly0 as i32)..=(ly1 as i32) {
        let y = sy(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{PAD}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">1e{e}</text>"#,
            PAD - 6.0,
            PAD - 10.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{xlabel}</text>"#,
        W / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{ylabel}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##,
            sx(x),
            sy(y)
        );
    }
    if !line.is_empty() {
        let pts: Vec<String> = line
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
