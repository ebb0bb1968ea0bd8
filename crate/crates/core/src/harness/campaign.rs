use std::env;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackConfig, ExperimentConfig, SingleContextMethod};
use super::episode::{run_episode, single_context_outcome, Simulation};
use super::metrics::RunMetrics;
use crate::attacks::{feasibility_check, FeasibilityMode, SingleContextOutcome};
use crate::convex::{Ellipsoid, HullOptions};
use crate::error::{Error, Result};
use crate::learners::LinearPolicy;

/// Caps the number of replications run at once.
pub const THREADS_ENV: &str = "BANDITLAB_THREADS";

/// Arithmetic mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub replications: u32,
    pub completed: usize,
    pub target_pulls: Stat,
    pub target_fraction: Stat,
    pub total_cost: Stat,
    pub regret: Stat,
    /// Target pulls per visit of the attacked context, for single-context
    /// campaigns.
    pub single_context_success: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignResult {
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<ReplicationFailure>,
    pub summary: CampaignSummary,
}

/// Aggregates completed runs.
pub fn summarize(replications: u32, runs: &[RunMetrics]) -> CampaignSummary {
    let stat = |f: &dyn Fn(&RunMetrics) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
    let single: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.single_context.map(|s| s.success_rate()))
        .collect();
    CampaignSummary {
        replications,
        completed: runs.len(),
        target_pulls: stat(&|r| r.target_pulls() as f64),
        target_fraction: stat(&|r| r.target_fraction()),
        total_cost: stat(&|r| r.total_cost),
        regret: stat(&|r| r.regret),
        single_context_success: (!single.is_empty()).then(|| Stat::of(&single)),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={raw} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs `replications` episodes with seeds `seed, seed + 1, ...`. The
/// first replication is set up before any work starts, so configuration
/// errors are returned directly; failures during runs are collected.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignResult> {
    config.validate()?;
    Simulation::new(config, config.seed)?;
    let seeds: Vec<u64> = (0..config.replications as u64)
        .map(|i| config.seed.wrapping_add(i))
        .collect();
    let outcomes: Vec<(u64, Result<RunMetrics>)> = thread_pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&s| (s, run_episode(config, s)))
            .collect()
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(m) => runs.push(m),
            Err(e) => failures.push(ReplicationFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let summary = summarize(config.replications, &runs);
    Ok(CampaignResult {
        runs,
        failures,
        summary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub target_pulls: Stat,
    pub total_cost: Stat,
    pub failures: usize,
}

/// One campaign per `gamma` of a reward-poisoning config.
pub fn gamma_sweep(config: &ExperimentConfig, gammas: &[f64]) -> Result<Vec<GammaRow>> {
    if !matches!(config.attack, AttackConfig::Ace { .. }) {
        return Err(Error::Config("gamma sweeps need an ace attack".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {g}")));
    }
    gammas
        .iter()
        .map(|&g| {
            let mut c = config.clone();
            if let AttackConfig::Ace { gamma, .. } = &mut c.attack {
                *gamma = g;
            }
            let result = run_campaign(&c)?;
            Ok(GammaRow {
                gamma: g,
                target_pulls: result.summary.target_pulls,
                total_cost: result.summary.total_cost,
                failures: result.failures.len(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub seed: u64,
    /// Unattacked steps run before probing.
    pub step: u64,
    pub context: usize,
    pub target_arm: usize,
    pub mode: FeasibilityMode,
    pub feasible: bool,
    pub hull_distance: f64,
    pub witness_norm: Option<f64>,
    /// `||y||` of the attack found at the probed state.
    pub perturbation_norm: Option<f64>,
    pub outcome: String,
}

/// Runs the learner unattacked up to the attacker's start step, then checks
/// whether the single-context attack of `config` is feasible and solves it.
pub fn feasibility_probe(config: &ExperimentConfig, seed: u64) -> Result<ProbeReport> {
    let AttackConfig::SingleContext {
        method,
        margin,
        ts_confidence,
        start_step,
        ..
    } = config.attack
    else {
        return Err(Error::Config("feasibility probes need a single_context attack".into()));
    };
    let mut sim = Simulation::new(config, seed)?;
    for _ in 0..start_step {
        sim.step(false, &mut |_| {})?;
    }
    let t = start_step + 1;
    let context = sim.target_context().expect("single-context run");
    let target_arm = sim.target_arm();
    let lin = sim
        .learner()
        .as_linear()
        .ok_or_else(|| Error::Config("single-context attacks need a linear learner".into()))?;
    let (ellipsoids, mode) = match (lin.policy(), method) {
        (LinearPolicy::EpsGreedy, _) => (
            lin.states()
                .iter()
                .map(|s| Ellipsoid::point(s.estimate().clone()))
                .collect::<Vec<_>>(),
            FeasibilityMode::Relaxed,
        ),
        (_, SingleContextMethod::Full) => (lin.ellipsoids()?, FeasibilityMode::Full),
        (_, SingleContextMethod::Relaxed) => (lin.ellipsoids()?, FeasibilityMode::Relaxed),
    };
    let mut attack = crate::attacks::SingleContextAttackConfig::new(
        sim.instance().context(context).clone(),
        target_arm,
        margin,
    );
    attack.ts_confidence = ts_confidence;
    attack.full.seed = seed;
    let feasibility = feasibility_check(
        &ellipsoids,
        target_arm,
        mode,
        HullOptions::default(),
        &attack.full,
    )
    .map_err(|e| e.at_step(t))?;
    let outcome =
        single_context_outcome(sim.learner(), &attack, method, t).map_err(|e| e.at_step(t))?;
    let (perturbation_norm, outcome) = match outcome {
        SingleContextOutcome::Perturbation(s) => (Some(s.norm), "perturbation".to_string()),
        SingleContextOutcome::Infeasible => (None, "infeasible".to_string()),
        SingleContextOutcome::SolverFailure(msg) => (None, format!("solver failure: {msg}")),
    };
    Ok(ProbeReport {
        seed,
        step: start_step,
        context,
        target_arm,
        mode,
        feasible: feasibility.feasible,
        hull_distance: feasibility.hull_distance,
        witness_norm: feasibility.witness.map(|w| w.norm()),
        perturbation_norm,
        outcome,
    })
}
