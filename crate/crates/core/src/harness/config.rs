use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AceVariant;
use crate::error::{Error, Result};
use crate::learners::{EpsSchedule, LearnerKind, LearnerParams, TsScale};

fn default_replications() -> u32 {
    1
}

fn default_stride() -> u64 {
    1000
}

/// One experiment: environment, learner, attacker and run protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub learner: LearnerConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    /// Overrides the attacker's default choice of target arm.
    #[serde(default)]
    pub target_arm: Option<usize>,
    pub horizon: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Steps between recorded series rows.
    #[serde(default = "default_stride")]
    pub series_stride: u64,
    /// Keep one record per step.
    #[serde(default)]
    pub full_log: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Synthetic {
        dim: usize,
        n_arms: usize,
        n_contexts: usize,
        sigma: f64,
        /// Fixed instance for every replication; when unset each run draws
        /// its own instance from its seed.
        #[serde(default)]
        instance_seed: Option<u64>,
    },
    Features {
        path: PathBuf,
        n_arms: usize,
        sigma: f64,
    },
    Instance {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Defaults to the environment's noise level.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Defaults to the instance's largest parameter norm.
    #[serde(default)]
    pub param_bound: Option<f64>,
    /// Defaults to the instance's largest context norm.
    #[serde(default)]
    pub context_bound: Option<f64>,
    #[serde(default)]
    pub ts_scale: Option<TsScale>,
    #[serde(default)]
    pub eps_schedule: Option<EpsSchedule>,
    #[serde(default)]
    pub n_experts: Option<usize>,
    /// Exp4 learning rate; defaults to `sqrt(2 ln N / (T K))`.
    #[serde(default)]
    pub exp4_eta: Option<f64>,
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            lambda: None,
            delta: None,
            sigma: None,
            param_bound: None,
            context_bound: None,
            ts_scale: None,
            eps_schedule: None,
            n_experts: None,
            exp4_eta: None,
        }
    }

    pub fn n_experts(&self) -> usize {
        self.n_experts.unwrap_or(10)
    }

    /// Resolves unset fields against the instance the learner will face.
    pub fn params(
        &self,
        noise_sigma: f64,
        param_bound: f64,
        context_bound: f64,
        horizon: u64,
    ) -> LearnerParams {
        let base = LearnerParams::default();
        LearnerParams {
            lambda: self.lambda.unwrap_or(base.lambda),
            delta: self.delta.unwrap_or(base.delta),
            sigma: self.sigma.unwrap_or(noise_sigma),
            param_bound: self.param_bound.unwrap_or(param_bound),
            context_bound: self.context_bound.unwrap_or(context_bound),
            ts_scale: self.ts_scale.unwrap_or(base.ts_scale),
            eps_schedule: self.eps_schedule.unwrap_or(base.eps_schedule),
            horizon: Some(horizon.max(1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleContextMethod {
    Relaxed,
    Full,
}

fn default_gamma() -> f64 {
    0.22
}

fn default_margin() -> f64 {
    0.001
}

fn default_ts_confidence() -> f64 {
    0.05
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackConfig {
    #[default]
    None,
    Ace {
        variant: AceVariant,
        #[serde(default = "default_gamma")]
        gamma: f64,
        /// Noise of the replacement rewards; defaults to the environment's.
        #[serde(default)]
        attacker_sigma: Option<f64>,
    },
    Conic {
        /// Defaults to `2 / nu`.
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default = "one")]
        budget_fraction: f64,
        /// Defaults to `alpha`.
        #[serde(default)]
        budget_multiplier: Option<f64>,
    },
    SingleContext {
        method: SingleContextMethod,
        /// Pool index of the attacked context; random per run when unset.
        #[serde(default)]
        context: Option<usize>,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default = "default_ts_confidence")]
        ts_confidence: f64,
        /// First step at which the attacker acts.
        #[serde(default)]
        start_step: u64,
    },
    BatchPoison {
        batch_size: usize,
        /// Defaults to the learner's radius after `horizon` pulls.
        #[serde(default)]
        beta_max: Option<f64>,
    },
}

impl AttackConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AttackConfig::None => "none",
            AttackConfig::Ace { .. } => "ace",
            AttackConfig::Conic { .. } => "conic",
            AttackConfig::SingleContext { .. } => "single_context",
            AttackConfig::BatchPoison { .. } => "batch_poison",
        }
    }
}

impl ExperimentConfig {
    pub fn new(environment: EnvironmentConfig, learner: LearnerConfig, horizon: u64) -> Self {
        Self {
            environment,
            learner,
            attack: AttackConfig::None,
            target_arm: None,
            horizon,
            replications: 1,
            seed: 0,
            output: None,
            series_stride: default_stride(),
            full_log: false,
        }
    }

    /// Checks everything that does not need the instance. A zero horizon is
    /// allowed here (it yields empty metrics); [`ExperimentConfig::load`]
    /// rejects it.
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.series_stride == 0 {
            return Err(Error::Config("series_stride must be >= 1".into()));
        }
        match &self.environment {
            EnvironmentConfig::Synthetic { sigma, .. } | EnvironmentConfig::Features { sigma, .. } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!(
                        "environment sigma must be >= 0, got {sigma}"
                    )));
                }
            }
            EnvironmentConfig::Instance { .. } => {}
        }
        if self.learner.kind == LearnerKind::Exp4 && self.learner.n_experts() < 2 {
            return Err(Error::Config("exp4 needs at least 2 experts".into()));
        }
        if let Some(eta) = self.learner.exp4_eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("exp4_eta must be positive, got {eta}")));
            }
        }
        match &self.attack {
            AttackConfig::None => {}
            AttackConfig::Ace { gamma, attacker_sigma, .. } => {
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
                }
                if let Some(s) = attacker_sigma {
                    if !(*s >= 0.0 && s.is_finite()) {
                        return Err(Error::Config(format!(
                            "attacker_sigma must be >= 0, got {s}"
                        )));
                    }
                }
            }
            AttackConfig::Conic { alpha, budget_fraction, budget_multiplier } => {
                if let Some(a) = alpha {
                    if !(*a >= 1.0 && a.is_finite()) {
                        return Err(Error::Config(format!("alpha must be >= 1, got {a}")));
                    }
                }
                if !(*budget_fraction > 0.0 && *budget_fraction <= 1.0) {
                    return Err(Error::Config(format!(
                        "budget_fraction must lie in (0, 1], got {budget_fraction}"
                    )));
                }
                if let Some(m) = budget_multiplier {
                    if !(*m >= 1.0 && m.is_finite()) {
                        return Err(Error::Config(format!(
                            "budget_multiplier must be >= 1, got {m}"
                        )));
                    }
                }
            }
            AttackConfig::SingleContext { method, margin, ts_confidence, .. } => {
                if !(*margin > 0.0 && margin.is_finite()) {
                    return Err(Error::Config(format!("margin must be positive, got {margin}")));
                }
                if !(*ts_confidence > 0.0 && *ts_confidence < 1.0) {
                    return Err(Error::Config(format!(
                        "ts_confidence must lie in (0, 1), got {ts_confidence}"
                    )));
                }
                match (self.learner.kind, method) {
                    (LearnerKind::Exp4, _) => {
                        return Err(Error::Config(
                            "single-context attacks need a linear learner".into(),
                        ))
                    }
                    (LearnerKind::LinTs, SingleContextMethod::Full) => {
                        return Err(Error::Config(
                            "only the relaxed single-context attack exists for lints".into(),
                        ))
                    }
                    _ => {}
                }
            }
            AttackConfig::BatchPoison { batch_size, beta_max } => {
                if *batch_size == 0 {
                    return Err(Error::Config("batch_size must be >= 1".into()));
                }
                if let Some(b) = beta_max {
                    if !(*b > 0.0 && b.is_finite()) {
                        return Err(Error::Config(format!("beta_max must be positive, got {b}")));
                    }
                }
                if self.learner.kind == LearnerKind::Exp4 {
                    return Err(Error::Config(
                        "batch poisoning needs a linear learner".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Parses a TOML document, applies `key=value` overrides with dotted
    /// keys, and validates the result.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if config.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Format {
                path: path.to_path_buf(),
                message: msg,
            },
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Sets `a.b.c = value` in a TOML table. The value is read as a TOML
/// literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, path) = parts.split_last().expect("nonempty key");
    let mut node = table;
    for p in path {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
horizon = 1000
seed = 3

[environment]
kind = "synthetic"
dim = 4
n_arms = 3
n_contexts = 5
sigma = 0.1

[learner]
kind = "linucb"

[attack]
kind = "ace"
variant = "soft"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(SAMPLE, &[]).unwrap();
        assert_eq!(c.horizon, 1000);
        assert_eq!(c.replications, 1);
        assert_eq!(c.series_stride, 1000);
        assert_eq!(
            c.attack,
            AttackConfig::Ace {
                variant: AceVariant::Soft,
                gamma: 0.22,
                attacker_sigma: None
            }
        );
    }

    #[test]
    fn dotted_overrides_apply_after_parse() {
        let c = ExperimentConfig::from_toml_str(
            SAMPLE,
            &[
                "attack.gamma=0.5".into(),
                "learner.lambda = 2".into(),
                "learner.ts_scale.kind=fixed".into(),
                "learner.ts_scale.value=0.3".into(),
                "replications=4".into(),
            ],
        )
        .unwrap();
        assert!(matches!(c.attack, AttackConfig::Ace { gamma, .. } if gamma == 0.5));
        assert_eq!(c.learner.lambda, Some(2.0));
        assert_eq!(c.learner.ts_scale, Some(TsScale::Fixed { value: 0.3 }));
        assert_eq!(c.replications, 4);
    }

    #[test]
    fn string_overrides_need_no_quotes() {
        let c = ExperimentConfig::from_toml_str(SAMPLE, &["learner.kind=lints".into()]).unwrap();
        assert_eq!(c.learner.kind, LearnerKind::LinTs);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str(SAMPLE, &["attack.gama=0.5".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str(SAMPLE, &["bogus=1".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str(SAMPLE, &["no_equals".into()]).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for o in ["attack.gamma=1.5", "replications=0", "horizon=0", "series_stride=0"] {
            let e = ExperimentConfig::from_toml_str(SAMPLE, &[o.into()]).unwrap_err();
            assert!(e.is_configuration(), "{o}: {e}");
        }
    }

    #[test]
    fn lints_full_single_context_is_rejected() {
        let e = ExperimentConfig::from_toml_str(
            SAMPLE,
            &[
                "learner.kind=lints".into(),
                "attack={kind=\"single_context\", method=\"full\"}".into(),
            ],
        )
        .unwrap_err();
        assert!(e.to_string().contains("relaxed"));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::from_toml_str(SAMPLE, &[]).unwrap();
        c.output = Some("out".into());
        c.learner.ts_scale = Some(TsScale::Horizon);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_file_names_the_path() {
        let e = ExperimentConfig::load(Path::new("/nonexistent/x.toml"), &[]).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/x.toml"));
        assert!(e.is_configuration());
    }
}
