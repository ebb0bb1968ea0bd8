use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AttackConfig, EnvironmentConfig, ExperimentConfig, SingleContextMethod};
use super::metrics::{BatchPoisonStats, RunMetrics, SeriesRow, SingleContextStats, StepRecord};
use crate::attacks::{
    ace_perturb_soft, ace_perturb_stationary, compute_poison_magnitude, conic_perturb,
    conic_perturb_budgeted, eps_greedy_attack, full_linucb_attack, lints_attack, poison_batch,
    relaxed_linucb_attack, AceConfig, AceVariant, AttackOutcome, BatchPoisonConfig, BatchRow,
    CleanEstimator, ConicConfig, SingleContextAttackConfig, SingleContextOutcome,
};
use crate::convex::inf_norm;
use crate::error::{Error, Result};
use crate::learners::{
    default_learning_rate, make_paper_experts, Exp4Learner, Learner, LearnerParams,
    LinearLearner, LinearPolicy,
};
use crate::model::{generate_synthetic_instance, load_dataset_instance, BanditInstance};

const INSTANCE_STREAM: u64 = 0;
const SETUP_STREAM: u64 = 1;
const CONTEXT_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const LEARNER_STREAM: u64 = 4;
const ATTACKER_STREAM: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Builds the environment of a run. Synthetic instances without a fixed
/// `instance_seed` are drawn from the run seed.
pub fn build_instance(config: &ExperimentConfig, seed: u64) -> Result<BanditInstance> {
    match &config.environment {
        EnvironmentConfig::Synthetic {
            dim,
            n_arms,
            n_contexts,
            sigma,
            instance_seed,
        } => {
            let mut rng = stream(instance_seed.unwrap_or(seed), INSTANCE_STREAM);
            generate_synthetic_instance(*dim, *n_arms, *n_contexts, *sigma, &mut rng)
        }
        EnvironmentConfig::Features {
            path,
            n_arms,
            sigma,
        } => load_dataset_instance(path, *n_arms, *sigma),
        EnvironmentConfig::Instance { path } => BanditInstance::read_json(path),
    }
}

enum Attacker {
    None,
    Stationary(AceConfig),
    Soft(AceConfig, CleanEstimator),
    Conic { config: ConicConfig, budgeted: bool },
    Single {
        config: SingleContextAttackConfig,
        method: SingleContextMethod,
        start: u64,
    },
    /// Handled by the batched loop.
    Batch,
}

struct Recorder {
    horizon: u64,
    stride: u64,
    target: usize,
    metrics: RunMetrics,
}

impl Recorder {
    fn new(config: &ExperimentConfig, seed: u64, n_arms: usize, target: usize) -> Self {
        let mut metrics = RunMetrics {
            seed,
            horizon: config.horizon,
            target_arm: target,
            arm_pulls: vec![0; n_arms],
            log: config.full_log.then(Vec::new),
            ..RunMetrics::default()
        };
        if config.horizon > 0 {
            metrics.series.push(SeriesRow {
                step: 0,
                cum_cost: 0.0,
                target_pulls: 0,
                regret: 0.0,
            });
        }
        Self {
            horizon: config.horizon,
            stride: config.series_stride,
            target,
            metrics,
        }
    }

    fn push(&mut self, record: StepRecord) {
        let m = &mut self.metrics;
        m.arm_pulls[record.arm] += 1;
        m.total_cost += record.cost;
        m.regret += record.regret;
        if record.attacked {
            m.attacked_steps += 1;
        }
        if let Some(log) = m.log.as_mut() {
            log.push(record);
        }
        let t = record.step;
        if (t.is_multiple_of(self.stride) && t < self.horizon) || t == self.horizon {
            m.series.push(SeriesRow {
                step: t,
                cum_cost: m.total_cost,
                target_pulls: m.arm_pulls[self.target],
                regret: m.regret,
            });
        }
    }
}

/// A run in progress: environment, learner, attacker and their streams.
pub struct Simulation {
    instance: BanditInstance,
    params: LearnerParams,
    learner: Learner,
    attacker: Attacker,
    target_arm: usize,
    target_context: Option<usize>,
    best_means: Vec<f64>,
    contexts: ChaCha8Rng,
    noise: ChaCha8Rng,
    learner_rng: ChaCha8Rng,
    attacker_rng: ChaCha8Rng,
    recorder: Recorder,
    single: Option<SingleContextStats>,
    step: u64,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let instance = build_instance(config, seed)?;
        let mut setup = stream(seed, SETUP_STREAM);

        let target_context = match &config.attack {
            AttackConfig::SingleContext { context, .. } => {
                let c = match context {
                    Some(c) => *c,
                    None => setup.random_range(0..instance.n_contexts()),
                };
                if c >= instance.n_contexts() {
                    return Err(Error::Config(format!(
                        "attacked context {c} out of range for {} contexts",
                        instance.n_contexts()
                    )));
                }
                Some(c)
            }
            _ => None,
        };
        let target_arm = match (config.target_arm, target_context) {
            (Some(a), _) => a,
            (None, Some(c)) => instance.worst_arm_at(c),
            (None, None) => instance.worst_arm(),
        };
        let instance = instance.with_target(target_arm)?;
        let nu = instance.target().expect("target set").nu;
        let (k, d) = (instance.n_arms(), instance.dim());

        let params = config.learner.params(
            instance.sigma(),
            instance.param_norm_bound(),
            instance.context_norm_bound(),
            config.horizon,
        );
        params.validate()?;
        let learner = match config.learner.kind.linear_policy() {
            Some(policy) => Learner::Linear(LinearLearner::new(policy, params, k, d)?),
            None => {
                let n = config.learner.n_experts();
                let experts = make_paper_experts(&instance, target_arm, n, &mut setup)?;
                let eta = config
                    .learner
                    .exp4_eta
                    .unwrap_or_else(|| default_learning_rate(n, config.horizon, k));
                Learner::Exp4(Exp4Learner::new(experts, k, eta)?)
            }
        };

        let attacker = match &config.attack {
            AttackConfig::None => Attacker::None,
            AttackConfig::Ace {
                variant,
                gamma,
                attacker_sigma,
            } => {
                let ace = AceConfig {
                    target_arm,
                    gamma: *gamma,
                    variant: *variant,
                    attacker_noise_sigma: attacker_sigma.unwrap_or(instance.sigma()),
                };
                ace.validate()?;
                match variant {
                    AceVariant::Stationary => Attacker::Stationary(ace),
                    AceVariant::Soft => Attacker::Soft(ace, CleanEstimator::new(params, k, d)?),
                }
            }
            AttackConfig::Conic {
                alpha,
                budget_fraction,
                budget_multiplier,
            } => {
                let mut conic = ConicConfig::new(target_arm, nu)?;
                if let Some(a) = alpha {
                    conic.alpha = *a;
                }
                let multiplier = budget_multiplier.unwrap_or(conic.alpha);
                let budgeted = *budget_fraction < 1.0 || budget_multiplier.is_some();
                let config = conic.budgeted(*budget_fraction, multiplier)?;
                Attacker::Conic { config, budgeted }
            }
            AttackConfig::SingleContext {
                method,
                margin,
                ts_confidence,
                start_step,
                ..
            } => {
                let c = target_context.expect("resolved above");
                let mut single =
                    SingleContextAttackConfig::new(instance.context(c).clone(), target_arm, *margin);
                single.ts_confidence = *ts_confidence;
                single.full.seed = seed;
                Attacker::Single {
                    config: single,
                    method: *method,
                    start: *start_step,
                }
            }
            AttackConfig::BatchPoison { .. } => Attacker::Batch,
        };

        let best_means = (0..instance.n_contexts())
            .map(|c| instance.expected_reward(c, instance.best_arm(c)))
            .collect();
        let single = target_context.map(|context| SingleContextStats {
            context,
            ..SingleContextStats::default()
        });
        Ok(Self {
            recorder: Recorder::new(config, seed, k, target_arm),
            instance,
            params,
            learner,
            attacker,
            target_arm,
            target_context,
            best_means,
            contexts: stream(seed, CONTEXT_STREAM),
            noise: stream(seed, NOISE_STREAM),
            learner_rng: stream(seed, LEARNER_STREAM),
            attacker_rng: stream(seed, ATTACKER_STREAM),
            single,
            step: 0,
        })
    }

    pub fn instance(&self) -> &BanditInstance {
        &self.instance
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn target_arm(&self) -> usize {
        self.target_arm
    }

    pub fn target_context(&self) -> Option<usize> {
        self.target_context
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Runs one interaction. With `attack = false` the attacker stays idle
    /// (its clean estimator, if any, still learns).
    pub fn step(&mut self, attack: bool, observer: &mut dyn FnMut(&StepRecord)) -> Result<()> {
        let t = self.step + 1;
        let record = self.interact(t, attack).map_err(|e| e.at_step(t))?;
        self.step = t;
        observer(&record);
        self.recorder.push(record);
        Ok(())
    }

    fn interact(&mut self, t: u64, attack: bool) -> Result<StepRecord> {
        let ctx = self.instance.sample_context(&mut self.contexts);
        let x = self.instance.context(ctx).clone();

        let mut solved = false;
        let context_attack = if attack {
            self.attack_context(ctx, &x, t, &mut solved)?
        } else {
            AttackOutcome::pass_through()
        };
        let shown = context_attack.perturbed_context.as_ref().unwrap_or(&x);
        let arm = self.learner.select(shown, t, &mut self.learner_rng)?;
        let reward = self.instance.reward_at(ctx, arm, &mut self.noise)?;

        let reward_attack = match &mut self.attacker {
            Attacker::Stationary(ace) if attack => {
                ace_perturb_stationary(ace, arm, reward, &mut self.attacker_rng)
            }
            Attacker::Soft(ace, estimator) => {
                let out = if attack {
                    ace_perturb_soft(ace, estimator, &x, arm, reward)?
                } else {
                    AttackOutcome::pass_through()
                };
                estimator.update(&x, arm, reward)?;
                out
            }
            _ => AttackOutcome::pass_through(),
        };
        let observed = reward_attack.perturbed_reward.unwrap_or(reward);
        self.learner.observe(shown, arm, observed)?;

        if let Some(stats) = self.single.as_mut() {
            if attack && matches!(self.attacker, Attacker::Single { start, .. } if t >= start)
                && ctx == stats.context
            {
                stats.visits += 1;
                if arm == self.target_arm {
                    stats.target_pulls += 1;
                    if solved {
                        stats.target_pulls_when_solved += 1;
                    }
                }
            }
        }

        Ok(StepRecord {
            step: t,
            context: ctx,
            arm,
            reward,
            observed_reward: observed,
            cost: context_attack.cost + reward_attack.cost,
            attacked: context_attack.attacked || reward_attack.attacked,
            regret: self.best_means[ctx] - self.instance.expected_reward(ctx, arm),
        })
    }

    fn attack_context(
        &mut self,
        ctx: usize,
        x: &DVector<f64>,
        t: u64,
        solved: &mut bool,
    ) -> Result<AttackOutcome> {
        match &self.attacker {
            Attacker::Conic { config, budgeted } => {
                if *budgeted {
                    conic_perturb_budgeted(config, &self.learner, x, t, &mut self.attacker_rng)
                } else {
                    conic_perturb(config, &self.learner, x, t, &mut self.attacker_rng)
                }
            }
            Attacker::Single {
                config,
                method,
                start,
            } => {
                if t < *start || Some(ctx) != self.target_context {
                    return Ok(AttackOutcome::pass_through());
                }
                let outcome = single_context_outcome(&self.learner, config, *method, t)?;
                let stats = self.single.as_mut().expect("single-context stats");
                match outcome {
                    SingleContextOutcome::Perturbation(sol) => {
                        stats.solved += 1;
                        *solved = true;
                        if sol.norm == 0.0 {
                            Ok(AttackOutcome::pass_through())
                        } else {
                            Ok(AttackOutcome::context(x, x + sol.y))
                        }
                    }
                    SingleContextOutcome::Infeasible => {
                        stats.infeasible += 1;
                        Ok(AttackOutcome::pass_through())
                    }
                    SingleContextOutcome::SolverFailure(_) => {
                        stats.solver_failures += 1;
                        Ok(AttackOutcome::pass_through())
                    }
                }
            }
            _ => Ok(AttackOutcome::pass_through()),
        }
    }

    pub fn finish(mut self) -> RunMetrics {
        self.recorder.metrics.single_context = self.single;
        self.recorder.metrics
    }
}

/// Solves the single-context problem matching the learner's policy.
pub fn single_context_outcome(
    learner: &Learner,
    config: &SingleContextAttackConfig,
    method: SingleContextMethod,
    t: u64,
) -> Result<SingleContextOutcome> {
    let lin = learner
        .as_linear()
        .ok_or_else(|| Error::Config("single-context attacks need a linear learner".into()))?;
    match (lin.policy(), method) {
        (LinearPolicy::Ucb, SingleContextMethod::Relaxed) => {
            relaxed_linucb_attack(config, &lin.ellipsoids()?)
        }
        (LinearPolicy::Ucb, SingleContextMethod::Full) => {
            full_linucb_attack(config, &lin.ellipsoids()?)
        }
        (LinearPolicy::ThompsonSampling, _) => {
            let d = config.target_context.len();
            lints_attack(config, &lin.ellipsoids()?, lin.params().ts_scale_at(t, d))
        }
        (LinearPolicy::EpsGreedy, _) => {
            let estimates: Vec<DVector<f64>> =
                lin.states().iter().map(|s| s.estimate().clone()).collect();
            eps_greedy_attack(config, &estimates)
        }
    }
}

/// Runs one replication.
pub fn run_episode(config: &ExperimentConfig, seed: u64) -> Result<RunMetrics> {
    run_episode_observed(config, seed, &mut |_| {})
}

/// As [`run_episode`], calling `observer` after every step.
pub fn run_episode_observed(
    config: &ExperimentConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<RunMetrics> {
    if let AttackConfig::BatchPoison { .. } = config.attack {
        return run_batched(config, seed, observer);
    }
    let mut sim = Simulation::new(config, seed)?;
    for _ in 0..config.horizon {
        sim.step(true, observer)?;
    }
    Ok(sim.finish())
}

/// Semi-online protocol: the learner acts with frozen state for a batch of
/// `B` steps and is updated at the end of the batch. The attacker rewrites
/// the first batch before it is committed.
fn run_batched(
    config: &ExperimentConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepRecord),
) -> Result<RunMetrics> {
    let AttackConfig::BatchPoison {
        batch_size,
        beta_max,
    } = config.attack
    else {
        unreachable!("called for batch attacks only");
    };
    let mut sim = Simulation::new(config, seed)?;
    let (k, d) = (sim.instance.n_arms(), sim.instance.dim());
    let n_batches = (config.horizon as usize).div_ceil(batch_size).max(1);
    let beta_max =
        beta_max.unwrap_or_else(|| sim.params.beta((n_batches * batch_size) as u64, d));
    let poison = BatchPoisonConfig {
        target_arm: sim.target_arm,
        n_arms: k,
        batch_size,
        n_batches,
        nu: sim.instance.target().expect("target set").nu,
        beta_max,
    };
    poison.validate(d)?;
    let magnitude =
        compute_poison_magnitude(&poison, sim.instance.context_norm_bound(), d)?;
    let mut stats = BatchPoisonStats {
        batch_size,
        n_batches,
        magnitude,
        poisoned_rows: 0,
        poison_cost: 0.0,
        post_poison_steps: 0,
        post_poison_target_pulls: 0,
        max_inverse_norm: 0.0,
        inverse_norm_bound: poison.inverse_norm_bound(magnitude, d),
    };

    let mut t = 0u64;
    let mut batch_index = 0usize;
    while t < config.horizon {
        let len = batch_size.min((config.horizon - t) as usize);
        let mut rows = Vec::with_capacity(len);
        let mut records = Vec::with_capacity(len);
        for _ in 0..len {
            t += 1;
            let step = t;
            let ctx = sim.instance.sample_context(&mut sim.contexts);
            let x = sim.instance.context(ctx).clone();
            let arm = sim
                .learner
                .select(&x, step, &mut sim.learner_rng)
                .map_err(|e| e.at_step(step))?;
            let reward = sim
                .instance
                .reward_at(ctx, arm, &mut sim.noise)
                .map_err(|e| e.at_step(step))?;
            records.push(StepRecord {
                step,
                context: ctx,
                arm,
                reward,
                observed_reward: reward,
                cost: 0.0,
                attacked: false,
                regret: sim.best_means[ctx] - sim.instance.expected_reward(ctx, arm),
            });
            rows.push(BatchRow {
                context: x,
                arm,
                reward,
            });
        }
        let commit_step = t;
        if batch_index == 0 {
            let original = rows.clone();
            let report =
                poison_batch(&poison, magnitude, &mut rows).map_err(|e| e.at_step(commit_step))?;
            for &i in &report.modified {
                let (old, new) = (&original[i], &rows[i]);
                records[i].cost = (&old.context - &new.context).norm()
                    + (old.reward - new.reward).abs()
                    + if old.arm != new.arm { 1.0 } else { 0.0 };
                records[i].observed_reward = new.reward;
                records[i].attacked = true;
            }
            stats.poisoned_rows = report.modified.len();
            stats.poison_cost = report.cost;
        } else {
            stats.post_poison_steps += records.len() as u64;
            stats.post_poison_target_pulls +=
                records.iter().filter(|r| r.arm == sim.target_arm).count() as u64;
        }
        for row in &rows {
            sim.learner
                .observe(&row.context, row.arm, row.reward)
                .map_err(|e| e.at_step(commit_step))?;
        }
        if batch_index == 0 {
            let lin = sim.learner.as_linear().expect("validated linear learner");
            stats.max_inverse_norm = lin
                .states()
                .iter()
                .enumerate()
                .filter(|(a, _)| *a != sim.target_arm)
                .map(|(_, s)| inf_norm(s.design_inv()))
                .fold(0.0, f64::max);
        }
        for r in records {
            observer(&r);
            sim.recorder.push(r);
        }
        batch_index += 1;
    }
    sim.step = t;
    let mut metrics = sim.finish();
    metrics.batch_poison = Some(stats);
    Ok(metrics)
}

