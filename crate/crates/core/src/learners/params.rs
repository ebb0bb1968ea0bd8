use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale of the Thompson-sampling perturbation as a function of the step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TsScale {
    /// `sigma * sqrt(d ln(t / delta)) / 2`.
    Anytime,
    /// `sigma * sqrt(9 d ln(T / delta))` for a known horizon `T`.
    Horizon,
    Fixed { value: f64 },
}

/// Exploration probability of epsilon-greedy at step `t` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsSchedule {
    /// `1 / sqrt(t)`.
    InvSqrt,
    Constant { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerParams {
    pub lambda: f64,
    pub delta: f64,
    /// Noise level assumed by the confidence radius.
    pub sigma: f64,
    /// Bound `S` on `||theta_a||`.
    pub param_bound: f64,
    /// Bound `L` on `||x||`.
    pub context_bound: f64,
    pub ts_scale: TsScale,
    pub eps_schedule: EpsSchedule,
    pub horizon: Option<u64>,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            delta: 0.01,
            sigma: 0.1,
            param_bound: 1.0,
            context_bound: 1.0,
            ts_scale: TsScale::Anytime,
            eps_schedule: EpsSchedule::InvSqrt,
            horizon: None,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be >= 0, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        nonneg("sigma", self.sigma)?;
        nonneg("param_bound", self.param_bound)?;
        nonneg("context_bound", self.context_bound)?;
        match self.ts_scale {
            TsScale::Fixed { value } => nonneg("ts_scale.value", value)?,
            TsScale::Horizon if self.horizon.is_none() => {
                return Err(Error::Config(
                    "horizon-based ts_scale needs a horizon".into(),
                ))
            }
            _ => {}
        }
        if let EpsSchedule::Constant { value } = self.eps_schedule {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!(
                    "constant epsilon must lie in [0, 1], got {value}"
                )));
            }
        }
        if self.horizon == Some(0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    /// Confidence radius after `pulls` observations of an arm in dimension `d`.
    pub fn beta(&self, pulls: u64, d: usize) -> f64 {
        beta(self, pulls, d)
    }

    /// Thompson-sampling scale at step `t >= 1`.
    pub fn ts_scale_at(&self, t: u64, d: usize) -> f64 {
        let d = d as f64;
        match self.ts_scale {
            TsScale::Anytime => {
                let t = t.max(1) as f64;
                self.sigma * (d * (t / self.delta).ln()).max(0.0).sqrt() / 2.0
            }
            TsScale::Horizon => {
                let horizon = self.horizon.unwrap_or(1).max(1) as f64;
                self.sigma * (9.0 * d * (horizon / self.delta).ln()).max(0.0).sqrt()
            }
            TsScale::Fixed { value } => value,
        }
    }

    /// Exploration probability at step `t >= 1`.
    pub fn epsilon_at(&self, t: u64) -> f64 {
        match self.eps_schedule {
            EpsSchedule::InvSqrt => 1.0 / (t.max(1) as f64).sqrt(),
            EpsSchedule::Constant { value } => value,
        }
    }
}

/// `sigma * sqrt(d ln((1 + L^2 (1 + pulls) / lambda) / delta)) + S sqrt(lambda)`.
pub fn beta(params: &LearnerParams, pulls: u64, d: usize) -> f64 {
    let l2 = params.context_bound * params.context_bound;
    let inner = (1.0 + l2 * (1.0 + pulls as f64) / params.lambda) / params.delta;
    params.sigma * (d as f64 * inner.ln()).max(0.0).sqrt()
        + params.param_bound * params.lambda.sqrt()
}
