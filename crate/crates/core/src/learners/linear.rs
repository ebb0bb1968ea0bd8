//! LinUCB, linear Thompson sampling and epsilon-greedy over per-arm ridge
//! estimators. All argmax selections break ties toward the lowest arm index.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::LearnerParams;
use super::ridge::{ArmSnapshot, RidgeArmState};
use crate::convex::{spd_factor, Ellipsoid};
use crate::error::{Error, Result};
use crate::model::argmax;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearPolicy {
    #[serde(rename = "linucb")]
    Ucb,
    #[serde(rename = "lints")]
    ThompsonSampling,
    EpsGreedy,
}

/// `<theta_a, x> + beta_a ||x||_{V_a^-1}` for every arm.
pub fn ucb_scores(
    states: &[RidgeArmState],
    params: &LearnerParams,
    context: &DVector<f64>,
) -> Vec<f64> {
    states
        .iter()
        .map(|s| {
            s.estimate().dot(context) + params.beta(s.pulls(), s.dim()) * s.inv_norm(context)
        })
        .collect()
}

/// Lowest-index argmax of a score vector; non-finite scores are an error.
pub fn select_max(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no arms to select from".into()));
    }
    if let Some(a) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!(
            "score of arm {a} is {}",
            scores[a]
        )));
    }
    Ok(argmax(scores))
}

pub fn ucb_select(
    states: &[RidgeArmState],
    params: &LearnerParams,
    context: &DVector<f64>,
    _t: u64,
) -> Result<usize> {
    check_context(states, context)?;
    select_max(&ucb_scores(states, params, context))
}

/// Arm with the largest estimated reward.
pub fn greedy_select(states: &[RidgeArmState], context: &DVector<f64>) -> Result<usize> {
    check_context(states, context)?;
    let scores: Vec<f64> = states.iter().map(|s| s.estimate().dot(context)).collect();
    select_max(&scores)
}

/// Draws `theta_a ~ N(estimate_a, v^2 V_a^-1)` per arm and plays the best.
pub fn ts_select<R: Rng + ?Sized>(
    states: &[RidgeArmState],
    params: &LearnerParams,
    context: &DVector<f64>,
    t: u64,
    rng: &mut R,
) -> Result<usize> {
    check_context(states, context)?;
    let mut scores = Vec::with_capacity(states.len());
    for s in states {
        let scale = params.ts_scale_at(t, s.dim());
        let z = DVector::from_fn(s.dim(), |_, _| StandardNormal.sample(rng));
        // V = L L', so L'^-1 z has covariance V^-1.
        let factor = spd_factor(s.design())?;
        let theta = s.estimate() + factor.solve_upper(&z) * scale;
        scores.push(theta.dot(context));
    }
    select_max(&scores)
}

/// Explores uniformly with probability `epsilon_t`, otherwise plays greedily.
pub fn eps_greedy_select<R: Rng + ?Sized>(
    states: &[RidgeArmState],
    params: &LearnerParams,
    context: &DVector<f64>,
    t: u64,
    rng: &mut R,
) -> Result<usize> {
    check_context(states, context)?;
    if rng.random::<f64>() < params.epsilon_at(t) {
        return Ok(rng.random_range(0..states.len()));
    }
    greedy_select(states, context)
}

fn check_context(states: &[RidgeArmState], context: &DVector<f64>) -> Result<()> {
    let Some(first) = states.first() else {
        return Err(Error::InvalidInput("no arms to select from".into()));
    };
    if context.len() != first.dim() {
        return Err(Error::Dimension {
            expected: first.dim(),
            found: context.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LinearLearner {
    policy: LinearPolicy,
    params: LearnerParams,
    states: Vec<RidgeArmState>,
}

impl LinearLearner {
    pub fn new(policy: LinearPolicy, params: LearnerParams, n_arms: usize, dim: usize) -> Result<Self> {
        params.validate()?;
        if n_arms == 0 {
            return Err(Error::Config("learner needs at least one arm".into()));
        }
        let states = (0..n_arms)
            .map(|_| RidgeArmState::new(dim, params.lambda))
            .collect::<Result<_>>()?;
        Ok(Self {
            policy,
            params,
            states,
        })
    }

    pub fn policy(&self) -> LinearPolicy {
        self.policy
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn states(&self) -> &[RidgeArmState] {
        &self.states
    }

    pub fn beta(&self, arm: usize) -> f64 {
        let s = &self.states[arm];
        self.params.beta(s.pulls(), s.dim())
    }

    /// Confidence ellipsoids of every arm at the current radii.
    pub fn ellipsoids(&self) -> Result<Vec<Ellipsoid>> {
        (0..self.states.len())
            .map(|a| self.states[a].ellipsoid(self.beta(a)))
            .collect()
    }

    pub fn select<R: Rng + ?Sized>(
        &self,
        context: &DVector<f64>,
        t: u64,
        rng: &mut R,
    ) -> Result<usize> {
        match self.policy {
            LinearPolicy::Ucb => ucb_select(&self.states, &self.params, context, t),
            LinearPolicy::ThompsonSampling => ts_select(&self.states, &self.params, context, t, rng),
            LinearPolicy::EpsGreedy => {
                eps_greedy_select(&self.states, &self.params, context, t, rng)
            }
        }
    }

    /// The arm the learner would most plausibly play, for a white-box
    /// attacker: the UCB argmax, the greedy argmax for epsilon-greedy, and a
    /// fresh posterior draw for Thompson sampling.
    pub fn preview<R: Rng + ?Sized>(
        &self,
        context: &DVector<f64>,
        t: u64,
        rng: &mut R,
    ) -> Result<usize> {
        match self.policy {
            LinearPolicy::EpsGreedy => greedy_select(&self.states, context),
            _ => self.select(context, t, rng),
        }
    }

    pub fn observe(&mut self, context: &DVector<f64>, arm: usize, reward: f64) -> Result<()> {
        let n_arms = self.states.len();
        self.states
            .get_mut(arm)
            .ok_or(Error::ArmIndex { arm, n_arms })?
            .update(context, reward)
    }

    pub fn snapshot(&self) -> Vec<ArmSnapshot> {
        self.states.iter().map(RidgeArmState::snapshot).collect()
    }

    pub fn restore(&mut self, arms: &[ArmSnapshot]) -> Result<()> {
        if arms.len() != self.states.len() {
            return Err(Error::InvalidInput(format!(
                "snapshot has {} arms, learner has {}",
                arms.len(),
                self.states.len()
            )));
        }
        self.states = arms
            .iter()
            .map(RidgeArmState::from_snapshot)
            .collect::<Result<_>>()?;
        Ok(())
    }
}
