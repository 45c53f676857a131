//! Versioned JSON run configurations.
//!
//! Every file carries `"version": 1`. Parsing happens in two passes so a
//! version mismatch is reported before any schema error.

use std::fs;
use std::path::{Path, PathBuf};

use freeopt_core::controller::{ControllerConfig, StepRule};
use freeopt_core::replay::MarkoutConfig;
use freeopt_core::sim::ScenarioConfig;
use freeopt_core::BuilderProblem;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: missing or non-integer `version`")]
    MissingVersion { path: PathBuf },
    #[error("{path}: schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Version { path: PathBuf, found: u64 },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: freeopt_core::Error,
    },
}

/// Config files that can check their own values.
pub trait Validate {
    fn validate(&self) -> freeopt_core::Result<()>;
}

pub fn parse<T: DeserializeOwned + Validate>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
    let found = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ConfigError::MissingVersion { path: path.into() })?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(ConfigError::Version { path: path.into(), found });
    }
    let typed: T = serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
    typed.validate().map_err(|source| ConfigError::Invalid { path: path.into(), source })?;
    Ok(typed)
}

pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    parse(&text, path)
}

fn version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFile {
    #[serde(default = "version")]
    pub version: u32,
    pub problem: BuilderProblem,
    /// Forces the sample-average path; non-normal returns require it.
    #[serde(default)]
    pub monte_carlo: Option<MonteCarlo>,
}

impl Validate for SolveFile {
    fn validate(&self) -> freeopt_core::Result<()> {
        self.problem.validate().map_err(|e| e.within("problem"))?;
        if let Some(mc) = self.monte_carlo {
            if mc.n_samples < 1000 {
                return Err(freeopt_core::Error::Config {
                    field: "monte_carlo.n_samples".into(),
                    reason: "must be >= 1000".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "version")]
    pub version: u32,
    pub scenario: ScenarioConfig,
}

impl Validate for ScenarioFile {
    fn validate(&self) -> freeopt_core::Result<()> {
        self.scenario.validate().map_err(|e| e.within("scenario"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneitySettings {
    pub window: f64,
    pub penalty: f64,
}

impl Default for HeterogeneitySettings {
    fn default() -> Self {
        HeterogeneitySettings { window: 8.0, penalty: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayFile {
    pub version: u32,
    pub markout: MarkoutConfig,
    pub windows: Vec<f64>,
    pub penalties: Vec<f64>,
    pub trailing: bool,
    pub heterogeneity: HeterogeneitySettings,
    /// Token whose quotes feed the volatility report, if any.
    pub volatility_token: Option<String>,
    pub volatility_bucket_ms: i64,
}

impl Default for ReplayFile {
    fn default() -> Self {
        ReplayFile {
            version: SCHEMA_VERSION,
            markout: MarkoutConfig::default(),
            windows: vec![2.0, 4.0, 6.0, 8.0],
            penalties: vec![0.0, 0.075, 0.15, 0.5],
            trailing: false,
            heterogeneity: HeterogeneitySettings::default(),
            volatility_token: None,
            volatility_bucket_ms: freeopt_core::replay::MS_PER_DAY,
        }
    }
}

fn invalid(field: &str, reason: &str) -> freeopt_core::Error {
    freeopt_core::Error::Config { field: field.into(), reason: reason.into() }
}

impl Validate for ReplayFile {
    fn validate(&self) -> freeopt_core::Result<()> {
        self.markout.validate().map_err(|e| e.within("markout"))?;
        if self.windows.is_empty() {
            return Err(invalid("windows", "must be non-empty"));
        }
        for (i, &w) in self.windows.iter().enumerate() {
            if !(0.0..=self.markout.horizon).contains(&w) {
                return Err(invalid(&format!("windows[{i}]"), "must lie within the markout horizon"));
            }
        }
        if self.penalties.is_empty() {
            return Err(invalid("penalties", "must be non-empty"));
        }
        for (i, &p) in self.penalties.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(invalid(&format!("penalties[{i}]"), "must be finite and >= 0"));
            }
        }
        if self.volatility_bucket_ms <= 0 {
            return Err(invalid("volatility_bucket_ms", "must be > 0"));
        }
        Ok(())
    }
}

/// Exercise environment driving the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// `q(p) = Φ((center - p) / scale)`, zero from `ceiling` on
    /// (default `center + 8·scale`).
    Stationary { center: f64, scale: f64, ceiling: Option<f64> },
    /// Centres switching at evenly spaced rounds.
    Piecewise { levels: Vec<f64>, scale: f64, ceiling: Option<f64> },
    /// Replayed block paths, one round per complete block in slot order.
    /// `dataset` is resolved relative to the config file.
    Replay {
        dataset: PathBuf,
        window: f64,
        #[serde(default)]
        markout: MarkoutConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSettings {
    pub target_alpha: f64,
    #[serde(default = "daily_rule")]
    pub step_rule: StepRule,
    /// Defaults to the environment's ceiling.
    #[serde(default)]
    pub p_max: Option<f64>,
    #[serde(default)]
    pub initial_p: f64,
}

fn daily_rule() -> StepRule {
    StepRule::daily()
}

impl ControllerSettings {
    pub fn resolve(&self, ceiling: f64) -> ControllerConfig {
        ControllerConfig {
            target_alpha: self.target_alpha,
            step_rule: self.step_rule,
            p_max: self.p_max.unwrap_or(ceiling),
            initial_p: self.initial_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlFile {
    #[serde(default = "version")]
    pub version: u32,
    pub controller: ControllerSettings,
    pub environment: EnvironmentSpec,
    /// Ignored for replay environments, which run one round per block.
    #[serde(default)]
    pub rounds: u64,
    #[serde(default)]
    pub seed: u64,
    /// Keep every `trace_stride`-th trace row.
    #[serde(default = "one")]
    pub trace_stride: u64,
}

fn one() -> u64 {
    1
}

impl EnvironmentSpec {
    pub fn ceiling(&self) -> Option<f64> {
        match *self {
            EnvironmentSpec::Stationary { center, scale, ceiling } => Some(ceiling.unwrap_or(center + 8.0 * scale)),
            EnvironmentSpec::Piecewise { ref levels, scale, ceiling } => {
                let top = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some(ceiling.unwrap_or(top + 8.0 * scale))
            }
            EnvironmentSpec::Replay { .. } => None,
        }
    }
}

impl Validate for ControlFile {
    fn validate(&self) -> freeopt_core::Result<()> {
        match &self.environment {
            EnvironmentSpec::Stationary { scale, .. } | EnvironmentSpec::Piecewise { scale, .. } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("environment.scale", "must be finite and > 0"));
                }
                if self.rounds == 0 {
                    return Err(invalid("rounds", "must be > 0"));
                }
            }
            EnvironmentSpec::Replay { window, markout, .. } => {
                markout.validate().map_err(|e| e.within("environment.markout"))?;
                if !(0.0..=markout.horizon).contains(window) {
                    return Err(invalid("environment.window", "must lie within the markout horizon"));
                }
            }
        }
        if let EnvironmentSpec::Piecewise { levels, .. } = &self.environment {
            if levels.is_empty() {
                return Err(invalid("environment.levels", "must be non-empty"));
            }
        }
        if self.trace_stride == 0 {
            return Err(invalid("trace_stride", "must be > 0"));
        }
        let ceiling = self.environment.ceiling().unwrap_or(f64::INFINITY);
        self.controller.resolve(ceiling).validate().map_err(|e| e.within("controller"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(text: &str) -> Result<SolveFile, ConfigError> {
        parse(text, Path::new("t.json"))
    }

    const SOLVE: &str = r#"{
        "version": 1,
        "problem": {
            "atomic_mev": 0.0,
            "pool": {"liquidity": 1000.0, "cex_price": 1.0, "price_gap": 0.0},
            "returns": {"kind": "normal", "sigma": 0.01},
            "window": 1.0
        }
    }"#;

    #[test]
    fn solve_file_round_trip() {
        let f = at(SOLVE).unwrap();
        assert_eq!(f.problem.pool.liquidity, 1000.0);
        assert_eq!(f.problem.time_scaling, 0.5);
        let back = serde_json::to_string(&f).unwrap();
        assert_eq!(at(&back).unwrap(), f);
    }

    #[test]
    fn negative_sigma_names_the_field() {
        let text = SOLVE.replace("0.01", "-0.01");
        let err = at(&text).unwrap_err().to_string();
        assert!(err.contains("problem.returns.sigma"), "{err}");
    }

    #[test]
    fn version_is_checked_first() {
        let text = SOLVE.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(at(&text), Err(ConfigError::Version { found: 2, .. })));
        let text = SOLVE.replace("\"version\": 1,", "");
        assert!(matches!(at(&text), Err(ConfigError::MissingVersion { .. })));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = SOLVE.replace("\"window\": 1.0", "\"window\": 1.0, \"windw\": 2");
        assert!(matches!(at(&text), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn scenario_defaults_fill_in() {
        let f: ScenarioFile =
            parse(r#"{"version": 1, "scenario": {"n_slots": 10, "seed": 3}}"#, Path::new("s.json")).unwrap();
        assert_eq!(f.scenario.window_grid, vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(f.scenario.seed, 3);
        let bad: Result<ScenarioFile, _> =
            parse(r#"{"version": 1, "scenario": {"trailing_fraction": 2.0}}"#, Path::new("s.json"));
        assert!(bad.unwrap_err().to_string().contains("scenario.trailing_fraction"));
    }

    #[test]
    fn control_file_defaults() {
        let f: ControlFile = parse(
            r#"{"version": 1, "rounds": 100,
                "controller": {"target_alpha": 0.001},
                "environment": {"kind": "stationary", "center": 0.3, "scale": 0.05}}"#,
            Path::new("c.json"),
        )
        .unwrap();
        assert_eq!(f.environment.ceiling(), Some(0.3 + 0.4));
        assert_eq!(f.controller.step_rule, StepRule::daily());
        assert_eq!(f.trace_stride, 1);
    }

    #[test]
    fn replay_file_defaults() {
        let f: ReplayFile = parse(r#"{"version": 1}"#, Path::new("r.json")).unwrap();
        assert_eq!(f, ReplayFile::default());
        let bad: Result<ReplayFile, _> = parse(r#"{"version": 1, "windows": [9.0]}"#, Path::new("r.json"));
        assert!(bad.unwrap_err().to_string().contains("windows[0]"));
    }
}
