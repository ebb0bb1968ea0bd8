//! Attacks that steer a contextual bandit learner toward a target arm:
//! reward poisoning, context dilation, single-context perturbations found
//! by cone programming, and batch poisoning of a semi-online learner.

mod batch;
mod conic;
mod reward;
mod single;

pub use batch::{
    compute_poison_magnitude, poison_batch, BatchPoisonConfig, BatchRow, PoisonReport,
};
pub use conic::{conic_perturb, conic_perturb_budgeted, ConicConfig};
pub use reward::{
    ace_perturb_soft, ace_perturb_stationary, soft_margin, AceConfig, AceVariant,
    CleanEstimator,
};
pub use single::{
    eps_greedy_attack, feasibility_check, full_linucb_attack, lints_attack, lints_cone_weight,
    relaxed_linucb_attack, Feasibility, FeasibilityMode, FullSearchOptions,
    SingleContextAttackConfig, SingleContextOutcome, SingleContextSolution,
};

use nalgebra::DVector;

/// What the attacker did at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub perturbed_context: Option<DVector<f64>>,
    pub perturbed_reward: Option<f64>,
    /// `|r - r~|` for reward attacks, `||x - x~||` for context attacks.
    pub cost: f64,
    pub attacked: bool,
}

impl AttackOutcome {
    pub fn pass_through() -> Self {
        Self {
            perturbed_context: None,
            perturbed_reward: None,
            cost: 0.0,
            attacked: false,
        }
    }

    pub fn reward(original: f64, perturbed: f64) -> Self {
        Self {
            perturbed_context: None,
            perturbed_reward: Some(perturbed),
            cost: (original - perturbed).abs(),
            attacked: true,
        }
    }

    pub fn context(original: &DVector<f64>, perturbed: DVector<f64>) -> Self {
        Self {
            cost: (original - &perturbed).norm(),
            perturbed_context: Some(perturbed),
            perturbed_reward: None,
            attacked: true,
        }
    }
}
