use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landing::SmoothnessConstants;
use crate::optim::{Retraction, SagaInit, Sampling, ScheduleKind};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Pca,
    Ica,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LandingGd,
    LandingSgd,
    LandingSaga,
    RiemannianGd,
    RiemannianSgd,
    PenaltySgd,
}

impl Algorithm {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::LandingSgd | Algorithm::LandingSaga | Algorithm::RiemannianSgd | Algorithm::PenaltySgd)
    }

    pub fn is_landing(self) -> bool {
        matches!(self, Algorithm::LandingGd | Algorithm::LandingSgd | Algorithm::LandingSaga)
    }
}

/// `"auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

impl AutoOr {
    pub fn value(self) -> Option<f64> {
        match self {
            AutoOr::Auto => None,
            AutoOr::Value(v) => Some(v),
        }
    }
}

impl Serialize for AutoOr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = AutoOr;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"auto\" or a number")
            }
            fn visit_str<E: serde::de::Error>(self, s: &str) -> std::result::Result<AutoOr, E> {
                if s == "auto" {
                    Ok(AutoOr::Auto)
                } else {
                    Err(E::invalid_value(serde::de::Unexpected::Str(s), &self))
                }
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<AutoOr, E> {
                Ok(AutoOr::Value(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<AutoOr, E> {
                Ok(AutoOr::Value(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<AutoOr, E> {
                Ok(AutoOr::Value(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Ambient dimension.
    pub n: usize,
    /// Number of columns; ICA defaults to `n`.
    pub p: Option<usize>,
    /// Sample count `N`; ignored by the linear problem.
    pub samples: Option<usize>,
    /// PCA noise level.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Data seed; defaults to the run seed.
    pub seed: Option<u64>,
    /// Load the instance from a container file instead of generating it.
    pub data_path: Option<PathBuf>,
}

fn default_sigma() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub eta0: AutoOr,
    /// Horizon for `horizon_scaled`; defaults to the iteration budget.
    pub horizon: Option<usize>,
    pub decay_factor: Option<f64>,
    pub decay_every: Option<f64>,
}

fn default_kind() -> String {
    "constant".into()
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            kind: default_kind(),
            eta0: AutoOr::Auto,
            horizon: None,
            decay_factor: None,
            decay_every: None,
        }
    }
}

impl ScheduleSpec {
    /// The schedule shape with the horizon filled from `max_iter`.
    pub fn kind(&self, max_iter: usize) -> Result<ScheduleKind> {
        let unused = |field: &str, present: bool| {
            if present {
                Err(Error::config(format!("schedule.{field}"), format!("not used by the {} schedule", self.kind)))
            } else {
                Ok(())
            }
        };
        match self.kind.as_str() {
            "constant" | "inv_sqrt" => {
                unused("horizon", self.horizon.is_some())?;
                unused("decay_factor", self.decay_factor.is_some())?;
                unused("decay_every", self.decay_every.is_some())?;
                Ok(if self.kind == "constant" {
                    ScheduleKind::Constant
                } else {
                    ScheduleKind::InvSqrt
                })
            }
            "horizon_scaled" => {
                unused("decay_factor", self.decay_factor.is_some())?;
                unused("decay_every", self.decay_every.is_some())?;
                Ok(ScheduleKind::HorizonScaled {
                    horizon: self.horizon.unwrap_or(max_iter),
                })
            }
            "epoch_decay" => {
                unused("horizon", self.horizon.is_some())?;
                Ok(ScheduleKind::EpochDecay {
                    decay_factor: self.decay_factor.unwrap_or(10.0),
                    decay_every: self
                        .decay_every
                        .ok_or_else(|| Error::config("schedule.decay_every", "required by epoch_decay"))?,
                })
            }
            other => Err(Error::config(
                "schedule.kind",
                format!("unknown schedule {other:?}; expected constant, inv_sqrt, horizon_scaled or epoch_decay"),
            )),
        }
    }
}

/// A single run, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub problem_params: ProblemParams,
    pub algorithm: Algorithm,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mu: AutoOr,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// Minibatch size; absent means full gradients (one sample for SAGA).
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub sampling: Sampling,
    pub max_iter: Option<usize>,
    pub max_epochs: Option<f64>,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub seed: u64,
    /// CSV path; the summary goes next to it with a `.json` extension.
    /// Relative paths resolve against the config file's directory.
    pub output_path: Option<PathBuf>,
    /// Off by default so that repeated runs give byte-identical traces.
    #[serde(default)]
    pub record_wall_time: bool,
    /// `‖X₀ᵀX₀ - I‖` of the starting point; 0 starts on the manifold.
    #[serde(default)]
    pub init_distance: f64,
    /// Smoothness constants; analytic ones (or sampled estimates) otherwise.
    pub constants: Option<SmoothnessConstants>,
    /// Penalty weight for `penalty_sgd`.
    pub lambda_pen: Option<f64>,
    #[serde(default)]
    pub retraction: Retraction,
    #[serde(default)]
    pub saga_init: SagaInit,
    /// SAGA gradient-table budget in MiB.
    pub saga_memory_mb: Option<usize>,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_log_every() -> usize {
    1
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_at(text, Path::new("<inline>"))
    }

    fn from_toml_at(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be positive and finite, got {}", self.lambda)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.75) {
            return Err(Error::config(
                "epsilon",
                format!("must lie in (0, 0.75) since the merit bound needs ε < 3/4, got {}", self.epsilon),
            ));
        }
        if let AutoOr::Value(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::config("mu", format!("must be \"auto\" or positive, got {mu}")));
            }
        }
        if let AutoOr::Value(eta) = self.schedule.eta0 {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::config("schedule.eta0", format!("must be \"auto\" or positive, got {eta}")));
            }
        }
        match (self.max_iter, self.max_epochs) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::config("max_iter", "set exactly one of max_iter and max_epochs"));
            }
            (None, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                return Err(Error::config("max_epochs", format!("must be positive, got {e}")));
            }
            _ => {}
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.batch_size.is_some() && !self.algorithm.is_stochastic() {
            return Err(Error::config("batch_size", format!("{:?} uses full gradients", self.algorithm)));
        }
        if !(0.0..1.0).contains(&self.init_distance) {
            return Err(Error::config("init_distance", "must lie in [0, 1)"));
        }
        if self.algorithm.is_landing() && self.init_distance > self.epsilon {
            return Err(Error::config("init_distance", "landing needs a start inside the safe region (≤ epsilon)"));
        }
        if matches!(self.algorithm, Algorithm::RiemannianGd | Algorithm::RiemannianSgd) && self.init_distance != 0.0 {
            return Err(Error::config("init_distance", "Riemannian methods start on the manifold"));
        }
        match (self.algorithm, self.lambda_pen) {
            (Algorithm::PenaltySgd, None) => return Err(Error::config("lambda_pen", "required by penalty_sgd")),
            (Algorithm::PenaltySgd, Some(l)) if !(l >= 0.0 && l.is_finite()) => {
                return Err(Error::config("lambda_pen", format!("must be nonnegative, got {l}")));
            }
            (Algorithm::PenaltySgd, _) => {}
            (_, Some(_)) => return Err(Error::config("lambda_pen", "only used by penalty_sgd")),
            _ => {}
        }
        let pp = &self.problem_params;
        if pp.n == 0 {
            return Err(Error::config("problem_params.n", "must be positive"));
        }
        match self.problem {
            ProblemKind::Pca | ProblemKind::Linear => {
                let p = pp.p.ok_or_else(|| Error::config("problem_params.p", "required"))?;
                if p == 0 || p > pp.n {
                    return Err(Error::config("problem_params.p", format!("must lie in 1..={}, got {p}", pp.n)));
                }
            }
            ProblemKind::Ica => {
                if let Some(p) = pp.p {
                    if p == 0 || p > pp.n {
                        return Err(Error::config("problem_params.p", format!("must lie in 1..={}, got {p}", pp.n)));
                    }
                }
            }
        }
        if self.problem != ProblemKind::Linear && pp.samples.is_none() && pp.data_path.is_none() {
            return Err(Error::config("problem_params.samples", "required unless data_path is given"));
        }
        if self.problem == ProblemKind::Linear && pp.data_path.is_some() {
            return Err(Error::config("problem_params.data_path", "the linear problem has no data file"));
        }
        if !(pp.sigma >= 0.0 && pp.sigma.is_finite()) {
            return Err(Error::config("problem_params.sigma", "must be nonnegative"));
        }
        self.schedule.kind(self.max_iter.unwrap_or(1))?;
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.problem_params.seed.unwrap_or(self.seed)
    }
}

/// Reads and validates a config file, resolving relative paths in it
/// against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut cfg = RunConfig::from_toml_at(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
    cfg.output_path = Some(match &cfg.output_path {
        Some(p) => resolve(p),
        None => path.with_extension("csv"),
    });
    if let Some(d) = &cfg.problem_params.data_path {
        cfg.problem_params.data_path = Some(resolve(d));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
problem = "pca"
algorithm = "landing_gd"
max_iter = 10

[problem_params]
n = 6
p = 2
samples = 20
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.epsilon, 0.5);
        assert_eq!(cfg.mu, AutoOr::Auto);
        assert_eq!(cfg.schedule.eta0, AutoOr::Auto);
        assert_eq!(cfg.log_every, 1);
        assert!(!cfg.record_wall_time);
    }

    #[test]
    fn missing_problem_is_named() {
        let text = MINIMAL.replace("problem = \"pca\"\n", "");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("problem"), "{err}");
    }

    #[test]
    fn epsilon_above_three_quarters_is_rejected() {
        let text = format!("epsilon = 0.9\n{MINIMAL}");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("epsilon") && err.contains("3/4"), "{err}");
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let text = format!("{MINIMAL}sigmaa = 0.1\n");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("sigmaa") && err.contains("line 10"), "{err}");
    }

    #[test]
    fn exactly_one_budget() {
        let both = format!("max_epochs = 2.0\n{MINIMAL}");
        assert!(RunConfig::from_toml(&both).is_err());
        let none = MINIMAL.replace("max_iter = 10\n", "");
        assert!(RunConfig::from_toml(&none).is_err());
    }

    #[test]
    fn mu_and_eta_accept_auto_or_numbers() {
        let text = format!("mu = 3\n{MINIMAL}\n[schedule]\nkind = \"inv_sqrt\"\neta0 = 0.25\n");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.mu, AutoOr::Value(3.0));
        assert_eq!(cfg.schedule.eta0, AutoOr::Value(0.25));
        let bad = format!("mu = \"big\"\n{MINIMAL}");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn penalty_needs_its_weight() {
        let text = MINIMAL.replace("landing_gd", "penalty_sgd");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("lambda_pen"), "{err}");
        assert!(RunConfig::from_toml(&format!("lambda_pen = 10.0\n{text}")).is_ok());
    }
}
