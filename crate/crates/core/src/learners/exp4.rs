//! Exp4: exponential weights over experts that each recommend a
//! distribution over arms.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{argmax, BanditInstance};

#[derive(Clone, Debug)]
pub enum Expert {
    /// A point mass on a uniformly random arm, redrawn every step.
    Random(Box<ChaCha8Rng>),
    /// Always the same arm.
    Constant(usize),
    /// The arm maximizing `<theta_a, x>` under the true parameters.
    Oracle(Vec<DVector<f64>>),
    /// The same distribution for every context.
    Fixed(Vec<f64>),
}

impl Expert {
    pub fn advice(&mut self, context: &DVector<f64>, n_arms: usize) -> Vec<f64> {
        match self {
            Expert::Random(rng) => point_mass(rng.random_range(0..n_arms), n_arms),
            _ => self.expected_advice(context, n_arms),
        }
    }

    /// Advice averaged over the expert's own randomness; does not advance it.
    pub fn expected_advice(&self, context: &DVector<f64>, n_arms: usize) -> Vec<f64> {
        match self {
            Expert::Random(_) => vec![1.0 / n_arms as f64; n_arms],
            Expert::Constant(a) => point_mass(*a, n_arms),
            Expert::Oracle(thetas) => {
                let scores: Vec<f64> = thetas.iter().map(|th| th.dot(context)).collect();
                point_mass(argmax(&scores), n_arms)
            }
            Expert::Fixed(p) => p.clone(),
        }
    }
}

fn point_mass(arm: usize, n_arms: usize) -> Vec<f64> {
    let mut p = vec![0.0; n_arms];
    p[arm] = 1.0;
    p
}

/// `n_experts - 2` random experts, one that always plays `target_arm`, and
/// one that plays the best arm under the true parameters.
pub fn make_paper_experts<R: Rng + ?Sized>(
    instance: &BanditInstance,
    target_arm: usize,
    n_experts: usize,
    rng: &mut R,
) -> Result<Vec<Expert>> {
    if n_experts < 2 {
        return Err(Error::Config(format!(
            "need at least 2 experts, got {n_experts}"
        )));
    }
    instance.check_arm(target_arm)?;
    let mut experts: Vec<Expert> = (0..n_experts - 2)
        .map(|_| Expert::Random(Box::new(ChaCha8Rng::seed_from_u64(rng.random()))))
        .collect();
    experts.push(Expert::Constant(target_arm));
    experts.push(Expert::Oracle(instance.arm_params().to_vec()));
    Ok(experts)
}

/// `sqrt(2 ln N / (T K))`.
pub fn default_learning_rate(n_experts: usize, horizon: u64, n_arms: usize) -> f64 {
    (2.0 * (n_experts as f64).ln() / (horizon.max(1) as f64 * n_arms as f64)).sqrt()
}

/// Expert weights kept as log-weights so long runs cannot underflow.
#[derive(Clone, Debug, PartialEq)]
pub struct Exp4State {
    log_weights: Vec<f64>,
    learning_rate: f64,
}

impl Exp4State {
    pub fn new(n_experts: usize, learning_rate: f64) -> Result<Self> {
        if n_experts == 0 {
            return Err(Error::Config("Exp4 needs at least one expert".into()));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "Exp4 learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            log_weights: vec![0.0; n_experts],
            learning_rate,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.log_weights.len()
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Normalized expert weights `Q_t`.
    pub fn weights(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// Arm distribution `P_j = sum_k Q_k E_{k,j}` for an `N x K` advice matrix.
    pub fn arm_probabilities(&self, advice: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_advice(advice, self.n_experts())?;
        let q = self.weights();
        let k = advice[0].len();
        let mut p = vec![0.0; k];
        for (qk, row) in q.iter().zip(advice) {
            for (pj, e) in p.iter_mut().zip(row) {
                *pj += qk * e;
            }
        }
        Ok(p)
    }
}

fn check_advice(advice: &[Vec<f64>], n_experts: usize) -> Result<()> {
    if advice.len() != n_experts {
        return Err(Error::Dimension {
            expected: n_experts,
            found: advice.len(),
        });
    }
    let k = advice.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(Error::InvalidInput("advice over zero arms".into()));
    }
    for row in advice {
        if row.len() != k {
            return Err(Error::Dimension {
                expected: k,
                found: row.len(),
            });
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&e| e.is_nan() || e < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(
                "expert advice must be a probability vector".into(),
            ));
        }
    }
    Ok(())
}

/// Importance-weighted reward estimates `1 - 1{a_t = i} (1 - r) / P_i`.
pub fn reward_estimates(n_arms: usize, chosen: usize, reward: f64, probs: &[f64]) -> Result<Vec<f64>> {
    if chosen >= n_arms || probs.len() != n_arms {
        return Err(Error::ArmIndex {
            arm: chosen,
            n_arms: probs.len(),
        });
    }
    let p = probs[chosen];
    if p.is_nan() || p <= 0.0 {
        return Err(Error::Numerical(format!(
            "chosen arm {chosen} had probability {p}"
        )));
    }
    let mut r = vec![1.0; n_arms];
    r[chosen] = 1.0 - (1.0 - reward) / p;
    Ok(r)
}

/// One exponential-weights update: each expert gains `sum_a E_{k,a} r_a`
/// and `Q_k` is multiplied by `exp(eta * gain_k)`.
pub fn exp4_step(
    state: &mut Exp4State,
    advice: &[Vec<f64>],
    chosen: usize,
    reward: f64,
    probs: &[f64],
) -> Result<()> {
    check_advice(advice, state.n_experts())?;
    let estimates = reward_estimates(advice[0].len(), chosen, reward, probs)?;
    for (lw, row) in state.log_weights.iter_mut().zip(advice) {
        let gain: f64 = row.iter().zip(&estimates).map(|(e, r)| e * r).sum();
        *lw += state.learning_rate * gain;
    }
    let max = state
        .log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical("Exp4 weights diverged".into()));
    }
    state.log_weights.iter_mut().for_each(|l| *l -= max);
    Ok(())
}

/// Exp4 as a bandit learner: advice for the current context is drawn in
/// `select` and consumed by the following `observe`.
#[derive(Clone, Debug)]
pub struct Exp4Learner {
    state: Exp4State,
    experts: Vec<Expert>,
    n_arms: usize,
    pending: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

impl Exp4Learner {
    pub fn new(experts: Vec<Expert>, n_arms: usize, learning_rate: f64) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::Config("learner needs at least one arm".into()));
        }
        for e in &experts {
            match e {
                Expert::Constant(a) if *a >= n_arms => {
                    return Err(Error::ArmIndex { arm: *a, n_arms })
                }
                Expert::Oracle(th) if th.len() != n_arms => {
                    return Err(Error::Dimension {
                        expected: n_arms,
                        found: th.len(),
                    })
                }
                Expert::Fixed(p) if p.len() != n_arms => {
                    return Err(Error::Dimension {
                        expected: n_arms,
                        found: p.len(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self {
            state: Exp4State::new(experts.len(), learning_rate)?,
            experts,
            n_arms,
            pending: None,
        })
    }

    pub fn state(&self) -> &Exp4State {
        &self.state
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn select<R: Rng + ?Sized>(&mut self, context: &DVector<f64>, rng: &mut R) -> Result<usize> {
        let advice: Vec<Vec<f64>> = self
            .experts
            .iter_mut()
            .map(|e| e.advice(context, self.n_arms))
            .collect();
        let probs = self.state.arm_probabilities(&advice)?;
        let arm = sample_index(&probs, rng);
        self.pending = Some((advice, probs));
        Ok(arm)
    }

    /// Most likely arm under the expected advice.
    pub fn preview(&self, context: &DVector<f64>) -> Result<usize> {
        let advice: Vec<Vec<f64>> = self
            .experts
            .iter()
            .map(|e| e.expected_advice(context, self.n_arms))
            .collect();
        Ok(argmax(&self.state.arm_probabilities(&advice)?))
    }

    pub fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        let (advice, probs) = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidInput("observe called before select".into()))?;
        exp4_step(&mut self.state, &advice, arm, reward, &probs)
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u at the top of the range; fall back to the last arm
    // with positive mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
