//! Poisoning the first mini-batch of a semi-online learner. For every
//! non-target arm and coordinate `i`, one row becomes `(delta e_i, arm, 0)`,
//! which makes that arm's design matrix strongly diagonally dominant: its
//! estimate and its exploration bonus both collapse for the rest of the run.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Safety factor turning the strict lower bound on the magnitude into a
/// usable value.
const STRICT_FACTOR: f64 = 1.0 + 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchPoisonConfig {
    pub target_arm: usize,
    pub n_arms: usize,
    /// Rows per mini-batch `B`.
    pub batch_size: usize,
    /// Number of mini-batches `M`.
    pub n_batches: usize,
    pub nu: f64,
    /// Upper bound on every confidence radius over the run.
    pub beta_max: f64,
}

impl BatchPoisonConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.target_arm >= self.n_arms {
            return Err(Error::ArmIndex {
                arm: self.target_arm,
                n_arms: self.n_arms,
            });
        }
        if self.batch_size == 0 || self.n_batches == 0 || dim == 0 {
            return Err(Error::Config(
                "batch size, batch count and dimension must be positive".into(),
            ));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if !(self.beta_max >= 0.0 && self.beta_max.is_finite()) {
            return Err(Error::Config(format!(
                "beta_max must be >= 0, got {}",
                self.beta_max
            )));
        }
        Ok(())
    }

    /// Bound on `||V_a^-1||_inf` after poisoning with magnitude `delta`.
    pub fn inverse_norm_bound(&self, delta: f64, dim: usize) -> f64 {
        1.0 / (delta * delta - (dim * self.n_batches * self.batch_size) as f64)
    }
}

/// `max(sqrt(2 M B L^2 d / nu + d M B), sqrt(4 beta_max^2 L^2 d / nu^2 + d M B))`,
/// scaled up slightly so the inequality is strict. The bound is the same
/// for every non-target arm.
pub fn compute_poison_magnitude(
    config: &BatchPoisonConfig,
    context_bound: f64,
    dim: usize,
) -> Result<f64> {
    config.validate(dim)?;
    if !(context_bound > 0.0 && context_bound.is_finite()) {
        return Err(Error::Config(format!(
            "context bound must be positive, got {context_bound}"
        )));
    }
    let m = config.n_batches as f64;
    let b = config.batch_size as f64;
    let d = dim as f64;
    let l2 = context_bound * context_bound;
    let nu = config.nu;
    let first = 2.0 * m * b * l2 * d / nu + d * m * b;
    let second = 4.0 * config.beta_max * config.beta_max * l2 * d / (nu * nu) + d * m * b;
    Ok(first.sqrt().max(second.sqrt()) * STRICT_FACTOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchRow {
    pub context: DVector<f64>,
    pub arm: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoisonReport {
    /// Indices of the rewritten rows.
    pub modified: Vec<usize>,
    /// Sum over rewritten rows of `||x - x~|| + |r - r~| + 1{arm changed}`.
    pub cost: f64,
}

/// Rewrites the first `(K - 1) d` rows of `batch` in place.
pub fn poison_batch(
    config: &BatchPoisonConfig,
    magnitude: f64,
    batch: &mut [BatchRow],
) -> Result<PoisonReport> {
    let dim = batch
        .first()
        .map(|r| r.context.len())
        .ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
    config.validate(dim)?;
    let needed = (config.n_arms - 1) * dim;
    if batch.len() < needed {
        return Err(Error::InvalidInput(format!(
            "batch of {} rows cannot hold {needed} poisoned rows",
            batch.len()
        )));
    }
    let mut modified = Vec::with_capacity(needed);
    let mut cost = 0.0;
    let arms = (0..config.n_arms).filter(|&a| a != config.target_arm);
    let slots = arms.flat_map(|a| (0..dim).map(move |i| (a, i)));
    for (row, (arm, i)) in batch.iter_mut().zip(slots) {
        if row.context.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: row.context.len(),
            });
        }
        let mut context = DVector::zeros(dim);
        context[i] = magnitude;
        cost += (&row.context - &context).norm()
            + row.reward.abs()
            + if row.arm != arm { 1.0 } else { 0.0 };
        modified.push(modified.len());
        *row = BatchRow {
            context,
            arm,
            reward: 0.0,
        };
    }
    Ok(PoisonReport { modified, cost })
}
