//! Context dilation: whenever the learner would not play the target arm,
//! the attacker scales the context up, which shrinks the exploration bonus
//! of every arm relative to its estimate.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AttackOutcome;
use crate::error::{Error, Result};
use crate::learners::Learner;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicConfig {
    pub target_arm: usize,
    /// Lower bound on the target arm's expected reward over the context pool.
    pub nu: f64,
    /// Dilation factor, `2 / nu` by default.
    pub alpha: f64,
    /// Probability that an attack is allowed at a step; 1 attacks always.
    pub budget_fraction: f64,
    /// Dilation used by the budgeted variant.
    pub budget_multiplier: f64,
}

impl ConicConfig {
    pub fn new(target_arm: usize, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1], got {nu}")));
        }
        let alpha = 2.0 / nu;
        Ok(Self {
            target_arm,
            nu,
            alpha,
            budget_fraction: 1.0,
            budget_multiplier: alpha,
        })
    }

    /// Attacks only a `fraction` of the eligible steps, with a fixed
    /// multiplier.
    pub fn budgeted(mut self, fraction: f64, multiplier: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!(
                "budget fraction must lie in (0, 1], got {fraction}"
            )));
        }
        if !(multiplier >= 1.0 && multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "budget multiplier must be >= 1, got {multiplier}"
            )));
        }
        self.budget_fraction = fraction;
        self.budget_multiplier = multiplier;
        Ok(self)
    }
}

fn dilate(context: &DVector<f64>, factor: f64) -> AttackOutcome {
    AttackOutcome::context(context, context * factor)
}

/// Multiplies the context by `alpha` unless the learner's previewed arm is
/// already the target.
pub fn conic_perturb<R: Rng + ?Sized>(
    config: &ConicConfig,
    learner: &Learner,
    context: &DVector<f64>,
    t: u64,
    rng: &mut R,
) -> Result<AttackOutcome> {
    if learner.preview(context, t, rng)? == config.target_arm {
        return Ok(AttackOutcome::pass_through());
    }
    Ok(dilate(context, config.alpha))
}

/// As [`conic_perturb`], but an eligible step is attacked only with
/// probability `budget_fraction`, using `budget_multiplier`.
pub fn conic_perturb_budgeted<R: Rng + ?Sized>(
    config: &ConicConfig,
    learner: &Learner,
    context: &DVector<f64>,
    t: u64,
    rng: &mut R,
) -> Result<AttackOutcome> {
    if learner.preview(context, t, rng)? == config.target_arm {
        return Ok(AttackOutcome::pass_through());
    }
    if config.budget_fraction < 1.0 && rng.random::<f64>() >= config.budget_fraction {
        return Ok(AttackOutcome::pass_through());
    }
    Ok(dilate(context, config.budget_multiplier))
}
