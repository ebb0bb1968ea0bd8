use serde::{Deserialize, Serialize};

/// Cumulative quantities after `step` interactions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub step: u64,
    pub cum_cost: f64,
    pub target_pulls: u64,
    pub regret: f64,
}

/// One interaction as the harness saw it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Pool index of the true context.
    pub context: usize,
    pub arm: usize,
    /// Reward produced by the environment.
    pub reward: f64,
    /// Reward handed to the learner.
    pub observed_reward: f64,
    pub cost: f64,
    pub attacked: bool,
    /// Gap between the best expected reward and the chosen arm's.
    pub regret: f64,
}

/// Counters for runs that attack one context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleContextStats {
    pub context: usize,
    /// Draws of the attacked context once the attacker is active.
    pub visits: u64,
    pub target_pulls: u64,
    /// Visits on which the solver returned a perturbation.
    pub solved: u64,
    pub target_pulls_when_solved: u64,
    pub infeasible: u64,
    pub solver_failures: u64,
}

impl SingleContextStats {
    /// Target pulls per visit of the attacked context.
    pub fn success_rate(&self) -> f64 {
        ratio(self.target_pulls, self.visits)
    }

    /// Target pulls per visit on which an attack was found.
    pub fn solved_success_rate(&self) -> f64 {
        ratio(self.target_pulls_when_solved, self.solved)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchPoisonStats {
    pub batch_size: usize,
    pub n_batches: usize,
    pub magnitude: f64,
    pub poisoned_rows: usize,
    pub poison_cost: f64,
    /// Steps after the poisoned batch was committed.
    pub post_poison_steps: u64,
    pub post_poison_target_pulls: u64,
    /// Largest `||V_a^-1||_inf` over non-target arms right after poisoning.
    pub max_inverse_norm: f64,
    pub inverse_norm_bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub horizon: u64,
    pub target_arm: usize,
    pub series: Vec<SeriesRow>,
    pub arm_pulls: Vec<u64>,
    pub total_cost: f64,
    pub attacked_steps: u64,
    pub regret: f64,
    pub single_context: Option<SingleContextStats>,
    pub batch_poison: Option<BatchPoisonStats>,
    #[serde(skip)]
    pub log: Option<Vec<StepRecord>>,
}

impl RunMetrics {
    pub fn target_pulls(&self) -> u64 {
        self.arm_pulls.get(self.target_arm).copied().unwrap_or(0)
    }

    pub fn target_fraction(&self) -> f64 {
        ratio(self.target_pulls(), self.horizon)
    }

    /// Recomputes the cumulative regret from the per-step log.
    pub fn regret_from_log(&self) -> Option<f64> {
        self.log.as_ref().map(|l| l.iter().map(|r| r.regret).sum())
    }
}
