//! TOML run configuration: strict parsing, defaults, semantic validation and
//! a normalized dump that re-parses to the same value.

use serde::{Deserialize, Serialize};

use opres_core::basis::{BasisKind, BasisSpec};
use opres_core::fnn::SizingConstants;
use opres_core::pipeline::{ArchPolicy, Experiment};
use opres_core::problems::{InputLaw, NoiseLaw, OperatorSpec, ProblemSpec};
use opres_core::train::{EncoderChoice, Optimizer, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for data generation and training; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub discretization: Discretization,
    pub problem: ProblemSection,
    #[serde(default)]
    pub data: DataSection,
    pub encoder: EncoderSection,
    #[serde(default = "default_arch")]
    pub architecture: ArchPolicy,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub paths: PathsSection,
}

fn default_arch() -> ArchPolicy {
    ArchPolicy::Unconstrained {
        constants: SizingConstants::default(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub dim: usize,
    /// Nodes per axis; derived from the bases in use when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub operator: OperatorSpec,
    pub input: InputLaw,
    pub noise: NoiseLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Half the number of generated pairs: `2 n` pairs are drawn and the
    /// split leaves `n` for each stage at the default fraction.
    pub n: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { n: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Basis,
    Pca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    /// Basis family for `X`; required for `kind = "basis"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisKind>,
    /// Basis family for `Y`; defaults to `basis`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_y: Option<BasisKind>,
    pub d_x: usize,
    pub d_y: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_kappa: Option<f64>,
    pub lr_decay: f64,
    pub split_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            epochs: t.epochs,
            clamp_kappa: t.clamp_kappa,
            lr_decay: t.lr_decay,
            split_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_test: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { n_test: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub constant: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_values: Vec<usize>,
    /// Offsets added to the run seed.
    pub seeds: Vec<u64>,
    /// Record per-cell wall time; off by default so output is reproducible.
    pub wall_time: bool,
    /// Replace training by `gen_error = constant · n^exponent`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PowerLaw>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n_values: vec![128, 512, 2048],
            seeds: vec![0, 1, 2],
            wall_time: false,
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub dataset: String,
    pub checkpoint: String,
    pub report: String,
    pub sweep: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            dataset: "dataset.opd".into(),
            checkpoint: "model.opm".into(),
            report: "report.csv".into(),
            sweep: "sweep.csv".into(),
        }
    }
}

/// Documented defaults, shown by `--help`.
pub const DEFAULTS_HELP: &str = "\
Config defaults (TOML, unknown keys rejected):
  seed = 0
  discretization.grid_order = derived from the bases in use
  data.n = 1000                      (2n pairs generated)
  architecture = { policy = \"unconstrained\", constants = { c_l = 1, c_p = 1, c_k = 1 } }
  training.optimizer = { kind = \"adam\", lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8 }
  training.batch_size = 32
  training.epochs = 2000
  training.lr_decay = 1.0
  training.split_fraction = 0.5
  training.clamp_kappa = unset
  eval.n_test = 1000
  sweep.n_values = [128, 512, 2048]
  sweep.seeds = [0, 1, 2]
  sweep.wall_time = false
  paths = { dataset = \"dataset.opd\", checkpoint = \"model.opm\", report = \"report.csv\", sweep = \"sweep.csv\" }";

fn semantic(path: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy with derived values written out explicitly. Describes the same run.
    pub fn filled(&self) -> RunConfig {
        let mut c = self.clone();
        c.discretization.grid_order = Some(self.grid_order());
        if c.encoder.kind == EncoderKind::Basis && c.encoder.basis_y.is_none() {
            c.encoder.basis_y = c.encoder.basis;
        }
        c
    }

    /// TOML of [`RunConfig::filled`]; parses back to an equal config.
    pub fn normalized(&self) -> String {
        toml::to_string(&self.filled()).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let dim = self.discretization.dim;
        if dim == 0 {
            return Err(semantic("discretization.dim", "must be at least 1"));
        }
        if self.discretization.grid_order == Some(0) {
            return Err(semantic("discretization.grid_order", "must be at least 1"));
        }
        self.problem
            .operator
            .validate(dim)
            .map_err(|e| semantic("problem.operator", e))?;
        self.problem
            .input
            .validate(dim)
            .map_err(|e| semantic("problem.input", e))?;
        self.problem
            .noise
            .validate(dim)
            .map_err(|e| semantic("problem.noise", e))?;
        if self.data.n == 0 {
            return Err(semantic("data.n", "must be at least 1"));
        }
        let enc = &self.encoder;
        if enc.d_x == 0 || enc.d_y == 0 {
            return Err(semantic("encoder", "d_x and d_y must be at least 1"));
        }
        match enc.kind {
            EncoderKind::Basis => {
                if enc.basis.is_none() {
                    return Err(semantic("encoder.basis", "required when kind = \"basis\""));
                }
                self.basis_specs()?;
            }
            EncoderKind::Pca => {
                if enc.basis.is_some() || enc.basis_y.is_some() {
                    return Err(semantic("encoder.basis", "not used when kind = \"pca\""));
                }
            }
        }
        if let Some(order) = self.discretization.grid_order {
            for spec in self.all_specs()? {
                if order < spec.required_grid_order() {
                    return Err(semantic(
                        "discretization.grid_order",
                        format!(
                            "{:?} basis of order {} needs grid order m >= {}",
                            spec.kind,
                            spec.order,
                            spec.required_grid_order()
                        ),
                    ));
                }
            }
        }
        self.train_config(self.seed)
            .validate()
            .map_err(|e| semantic("training", e))?;
        let f = self.training.split_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(semantic("training.split_fraction", "must lie in (0, 1)"));
        }
        if self.eval.n_test == 0 {
            return Err(semantic("eval.n_test", "must be at least 1"));
        }
        if self.sweep.seeds.is_empty() {
            return Err(semantic("sweep.seeds", "must not be empty"));
        }
        Ok(())
    }

    fn basis_specs(&self) -> Result<Option<(BasisSpec, BasisSpec)>, CliError> {
        let enc = &self.encoder;
        let dim = self.discretization.dim;
        let Some(bx) = enc.basis else {
            return Ok(None);
        };
        let by = enc.basis_y.unwrap_or(bx);
        let x = BasisSpec::with_encode_dim(bx, dim, enc.d_x).map_err(|e| semantic("encoder.d_x", e))?;
        let y = BasisSpec::with_encode_dim(by, dim, enc.d_y).map_err(|e| semantic("encoder.d_y", e))?;
        Ok(Some((x, y)))
    }

    fn all_specs(&self) -> Result<Vec<BasisSpec>, CliError> {
        let dim = self.discretization.dim;
        let mut specs = Vec::new();
        if let Some((x, y)) = self.basis_specs()? {
            specs.push(x);
            specs.push(y);
        }
        if let Some(s) = self.problem.input.basis(dim) {
            specs.push(s);
        }
        let op = &self.problem.operator;
        specs.push(op.input_span(dim).map_err(|e| semantic("problem.operator", e))?);
        specs.push(op.output_span(dim).map_err(|e| semantic("problem.operator", e))?);
        specs.push(self.problem.noise.span(dim).map_err(|e| semantic("problem.noise", e))?);
        Ok(specs)
    }

    pub fn grid_order(&self) -> usize {
        self.discretization.grid_order.unwrap_or_else(|| {
            self.all_specs()
                .unwrap_or_default()
                .iter()
                .map(BasisSpec::default_grid_order)
                .max()
                .unwrap_or(16)
        })
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            operator: self.problem.operator.clone(),
            input: self.problem.input.clone(),
            noise: self.problem.noise.clone(),
        }
    }

    pub fn encoder_choice(&self) -> EncoderChoice {
        match self.basis_specs().ok().flatten() {
            Some((x, y)) => EncoderChoice::Basis { x, y },
            None => EncoderChoice::Pca {
                d_x: self.encoder.d_x,
                d_y: self.encoder.d_y,
            },
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed,
            clamp_kappa: t.clamp_kappa,
            lr_decay: t.lr_decay,
        }
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            dim: self.discretization.dim,
            grid_order: self.grid_order(),
            problem: self.problem_spec(),
            encoders: self.encoder_choice(),
            arch: self.architecture,
            train: self.train_config(self.seed),
            split_fraction: self.training.split_fraction,
            n_test: self.eval.n_test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const MINIMAL: &str = r#"
[discretization]
dim = 1

[problem.operator]
kind = "heat_semigroup"
time = 0.1
mode_cap = 5

[problem.input]
kind = "coefficient_decay"
basis = "trigonometric"
order = 5
amplitude = 1.0
decay = 2.0

[problem.noise]
sigma = 0.0
mode_cap = 5

[encoder]
kind = "basis"
basis = "trigonometric"
d_x = 5
d_y = 5
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.training.epochs, 2000);
        assert_eq!(c.grid_order(), 23);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let text = MINIMAL.replace("d_y = 5", "d_y = 5\nd_z = 1");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn syntax_error_has_position() {
        let err = RunConfig::parse("[discretization\ndim = 1").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn normalized_dump_reparses() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let dump = c.normalized();
        let again = RunConfig::parse(&dump).unwrap();
        assert_eq!(again.normalized(), dump);
        assert_eq!(again.experiment(), c.experiment());
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let text = MINIMAL.replace("sigma = 0.0", "sigma = -1.0");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.starts_with("problem.noise"), "{err}");
        let text = MINIMAL.replace("d_x = 5", "d_x = 0");
        assert!(RunConfig::parse(&text).unwrap_err().to_string().starts_with("encoder"));
        let text = MINIMAL.replace("dim = 1", "dim = 1\ngrid_order = 4");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("needs grid order m >= 23"), "{err}");
    }
}
