//! Reward poisoning: non-target rewards are replaced by pure noise
//! (stationary variant) or pushed below a fraction of the target arm's
//! pessimistic value (soft variant).

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AttackOutcome;
use crate::error::{Error, Result};
use crate::learners::{LearnerParams, RidgeArmState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AceVariant {
    Stationary,
    Soft,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AceConfig {
    pub target_arm: usize,
    pub gamma: f64,
    pub variant: AceVariant,
    /// Standard deviation of the replacement rewards of the stationary
    /// variant.
    pub attacker_noise_sigma: f64,
}

impl AceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.attacker_noise_sigma >= 0.0 && self.attacker_noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "attacker noise sigma must be >= 0, got {}",
                self.attacker_noise_sigma
            )));
        }
        Ok(())
    }
}

/// Replaces a non-target reward by a fresh `N(0, sigma^2)` draw.
pub fn ace_perturb_stationary<R: Rng + ?Sized>(
    config: &AceConfig,
    chosen_arm: usize,
    true_reward: f64,
    rng: &mut R,
) -> AttackOutcome {
    if chosen_arm == config.target_arm {
        return AttackOutcome::pass_through();
    }
    let z: f64 = StandardNormal.sample(rng);
    AttackOutcome::reward(true_reward, config.attacker_noise_sigma * z)
}

/// Ridge estimates built from the rewards the environment actually
/// produced, with the learner's regularization and confidence radius.
#[derive(Clone, Debug)]
pub struct CleanEstimator {
    params: LearnerParams,
    states: Vec<RidgeArmState>,
}

impl CleanEstimator {
    pub fn new(params: LearnerParams, n_arms: usize, dim: usize) -> Result<Self> {
        params.validate()?;
        let states = (0..n_arms)
            .map(|_| RidgeArmState::new(dim, params.lambda))
            .collect::<Result<_>>()?;
        Ok(Self { params, states })
    }

    pub fn from_states(params: LearnerParams, states: Vec<RidgeArmState>) -> Self {
        Self { params, states }
    }

    pub fn states(&self) -> &[RidgeArmState] {
        &self.states
    }

    pub fn update(&mut self, context: &DVector<f64>, arm: usize, reward: f64) -> Result<()> {
        let n_arms = self.states.len();
        self.states
            .get_mut(arm)
            .ok_or(Error::ArmIndex { arm, n_arms })?
            .update(context, reward)
    }

    fn width(&self, arm: usize, x: &DVector<f64>) -> f64 {
        let s = &self.states[arm];
        self.params.beta(s.pulls(), s.dim()) * s.inv_norm(x)
    }

    /// `max_{theta in C_arm} <theta, x>`.
    pub fn upper(&self, arm: usize, x: &DVector<f64>) -> f64 {
        self.states[arm].estimate().dot(x) + self.width(arm, x)
    }

    /// `min_{theta in C_arm} <theta, x>`.
    pub fn lower(&self, arm: usize, x: &DVector<f64>) -> f64 {
        self.states[arm].estimate().dot(x) - self.width(arm, x)
    }
}

/// `(1 - gamma) min_{C_target} <theta, x> - max_{C_arm} <theta, x>`.
pub fn soft_margin(
    estimator: &CleanEstimator,
    target_arm: usize,
    arm: usize,
    context: &DVector<f64>,
    gamma: f64,
) -> f64 {
    (1.0 - gamma) * estimator.lower(target_arm, context) - estimator.upper(arm, context)
}

/// Lowers a non-target reward by `min(0, max(-1, C))`, `C` from
/// [`soft_margin`].
pub fn ace_perturb_soft(
    config: &AceConfig,
    estimator: &CleanEstimator,
    context: &DVector<f64>,
    chosen_arm: usize,
    true_reward: f64,
) -> Result<AttackOutcome> {
    let n_arms = estimator.states.len();
    for arm in [chosen_arm, config.target_arm] {
        if arm >= n_arms {
            return Err(Error::ArmIndex { arm, n_arms });
        }
    }
    if chosen_arm == config.target_arm {
        return Ok(AttackOutcome::pass_through());
    }
    let c = soft_margin(estimator, config.target_arm, chosen_arm, context, config.gamma);
    if !c.is_finite() {
        return Err(Error::Numerical(format!("soft attack margin is {c}")));
    }
    let shift = c.clamp(-1.0, 0.0);
    if shift == 0.0 {
        return Ok(AttackOutcome::pass_through());
    }
    Ok(AttackOutcome::reward(true_reward, true_reward + shift))
}
