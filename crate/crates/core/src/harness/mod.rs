//! Closed-loop simulation of environment, learner and attacker, with
//! replications, parameter sweeps and result files.

mod campaign;
mod config;
mod episode;
mod io;
mod metrics;

pub use campaign::{
    feasibility_probe, gamma_sweep, run_campaign, summarize, CampaignResult, CampaignSummary,
    GammaRow, ProbeReport, ReplicationFailure, Stat, THREADS_ENV,
};
pub use config::{
    apply_override, AttackConfig, EnvironmentConfig, ExperimentConfig, LearnerConfig,
    SingleContextMethod,
};
pub use episode::{
    build_instance, run_episode, run_episode_observed, single_context_outcome, Simulation,
};
pub use io::{
    read_results, write_campaign, write_gamma_table, write_results, LOG_FILE, SERIES_FILE,
    SUMMARY_FILE,
};
pub use metrics::{
    BatchPoisonStats, RunMetrics, SeriesRow, SingleContextStats, StepRecord,
};
