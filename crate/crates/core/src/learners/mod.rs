//! Contextual bandit learners: LinUCB, linear Thompson sampling,
//! epsilon-greedy and Exp4.

mod exp4;
mod linear;
mod params;
mod ridge;

pub use exp4::{
    default_learning_rate, exp4_step, make_paper_experts, reward_estimates, Exp4Learner,
    Exp4State, Expert,
};
pub use linear::{
    eps_greedy_select, greedy_select, select_max, ts_select, ucb_scores, ucb_select,
    LinearLearner, LinearPolicy,
};
pub use params::{beta, EpsSchedule, LearnerParams, TsScale};
pub use ridge::{ArmSnapshot, RidgeArmState, REFACTOR_EVERY};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "linucb")]
    LinUcb,
    #[serde(rename = "lints")]
    LinTs,
    #[serde(rename = "eps_greedy")]
    EpsGreedy,
    #[serde(rename = "exp4")]
    Exp4,
}

impl LearnerKind {
    pub fn linear_policy(self) -> Option<LinearPolicy> {
        match self {
            LearnerKind::LinUcb => Some(LinearPolicy::Ucb),
            LearnerKind::LinTs => Some(LinearPolicy::ThompsonSampling),
            LearnerKind::EpsGreedy => Some(LinearPolicy::EpsGreedy),
            LearnerKind::Exp4 => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Learner {
    Linear(LinearLearner),
    Exp4(Exp4Learner),
}

impl Learner {
    pub fn n_arms(&self) -> usize {
        match self {
            Learner::Linear(l) => l.states().len(),
            Learner::Exp4(l) => l.n_arms(),
        }
    }

    /// Picks an arm for the observed context at step `t >= 1`.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        context: &DVector<f64>,
        t: u64,
        rng: &mut R,
    ) -> Result<usize> {
        match self {
            Learner::Linear(l) => l.select(context, t, rng),
            Learner::Exp4(l) => l.select(context, rng),
        }
    }

    /// White-box view of the arm the learner would play, without changing
    /// its state. Randomized policies use `rng`, which should not be the
    /// learner's own stream.
    pub fn preview<R: Rng + ?Sized>(
        &self,
        context: &DVector<f64>,
        t: u64,
        rng: &mut R,
    ) -> Result<usize> {
        match self {
            Learner::Linear(l) => l.preview(context, t, rng),
            Learner::Exp4(l) => l.preview(context),
        }
    }

    pub fn observe(&mut self, context: &DVector<f64>, arm: usize, reward: f64) -> Result<()> {
        match self {
            Learner::Linear(l) => l.observe(context, arm, reward),
            Learner::Exp4(l) => l.observe(arm, reward),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearLearner> {
        match self {
            Learner::Linear(l) => Some(l),
            Learner::Exp4(_) => None,
        }
    }
}
