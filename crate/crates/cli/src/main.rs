//! `banditlab`: generate instances, run experiments and probe attacks from
//! TOML experiment configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use banditlab_core::harness::{
    build_instance, feasibility_probe, gamma_sweep, run_campaign, run_episode, write_campaign,
    write_gamma_table, write_results, AttackConfig, ExperimentConfig, RunMetrics,
};
use banditlab_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

const DEFAULT_OUT: &str = "results";
const INSTANCE_FILE: &str = "instance.json";
const PROBE_FILE: &str = "probe.json";
const GAMMA_FILE: &str = "gamma_sweep.csv";

#[derive(Parser)]
#[command(name = "banditlab", version, about = "Attacks on linear contextual bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Run seed; replaces `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; replaces `output` from the config (default
    /// `results`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a config value by dotted key, e.g. `attack.gamma=0.3`.
    /// Repeatable; applied after the file is parsed.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print only the paths of written files.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the config's environment instance to `instance.json`.
    GenInstance(Common),
    /// Run one episode and write its series and summary.
    Run(Common),
    /// Run `replications` episodes with seeds seed, seed+1, ...
    Campaign(Common),
    /// Repeat the campaign of an ACE config for each gamma.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        /// Comma-separated gamma values.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.02,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8"
        )]
        gammas: Vec<f64>,
    },
    /// Check single-context attack feasibility at the attacker's start step.
    Feasibility(Common),
    /// Run a batch-poisoning episode and report the poisoning statistics.
    PoisonDemo(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenInstance(_) => "gen-instance",
            Command::Run(_) => "run",
            Command::Campaign(_) => "campaign",
            Command::SweepGamma { .. } => "sweep-gamma",
            Command::Feasibility(_) => "feasibility",
            Command::PoisonDemo(_) => "poison-demo",
        }
    }
}

struct Loaded {
    config: ExperimentConfig,
    out: PathBuf,
    quiet: bool,
}

fn load(common: &Common) -> Result<Loaded> {
    let mut config = ExperimentConfig::load(&common.config, &common.set)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output = Some(out.clone());
    }
    let out = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Loaded {
        config,
        out,
        quiet: common.quiet,
    })
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn describe_run(m: &RunMetrics) -> String {
    format!(
        "seed {}: target arm {} pulled {}/{} ({:.4}), cost {:.4}, regret {:.4}",
        m.seed,
        m.target_arm,
        m.target_pulls(),
        m.horizon,
        m.target_fraction(),
        m.total_cost,
        m.regret
    )
}

fn gen_instance(common: &Common) -> Result<()> {
    let l = load(common)?;
    let instance = build_instance(&l.config, l.config.seed)?;
    std::fs::create_dir_all(&l.out).map_err(|e| Error::Io {
        path: l.out.clone(),
        source: e,
    })?;
    let path = l.out.join(INSTANCE_FILE);
    instance.write_json(&path)?;
    if !l.quiet {
        println!(
            "{} arms, dimension {}, {} contexts, worst arm {}",
            instance.n_arms(),
            instance.dim(),
            instance.n_contexts(),
            instance.worst_arm()
        );
    }
    print_paths(&[path]);
    Ok(())
}

fn run(common: &Common) -> Result<()> {
    let l = load(common)?;
    let m = run_episode(&l.config, l.config.seed)?;
    let paths = write_results(&m, &l.config, &l.out)?;
    if !l.quiet {
        println!("{}", describe_run(&m));
    }
    print_paths(&paths);
    Ok(())
}

/// Replications that failed are reported after the results are written;
/// they make the command exit with a runtime error.
fn campaign(common: &Common) -> Result<()> {
    let l = load(common)?;
    let result = run_campaign(&l.config)?;
    let paths = write_campaign(&result, &l.config, &l.out)?;
    if !l.quiet {
        let s = &result.summary;
        println!(
            "{}/{} runs: target fraction {:.4} (sd {:.4}), cost {:.4} (sd {:.4}), regret {:.4} (sd {:.4})",
            s.completed,
            s.replications,
            s.target_fraction.mean,
            s.target_fraction.std,
            s.total_cost.mean,
            s.total_cost.std,
            s.regret.mean,
            s.regret.std
        );
    }
    print_paths(&paths);
    match result.failures.first() {
        None => Ok(()),
        Some(first) => Err(Error::Numerical(format!(
            "{} of {} replications failed; first (seed {}): {}",
            result.failures.len(),
            result.summary.replications,
            first.seed,
            first.error
        ))),
    }
}

fn sweep_gamma(common: &Common, gammas: &[f64]) -> Result<()> {
    let l = load(common)?;
    let rows = gamma_sweep(&l.config, gammas)?;
    let path = l.out.join(GAMMA_FILE);
    write_gamma_table(&rows, &path)?;
    if !l.quiet {
        for r in &rows {
            println!(
                "gamma {:<6} target pulls {:.1} (sd {:.1}), cost {:.4} (sd {:.4}), failures {}",
                r.gamma,
                r.target_pulls.mean,
                r.target_pulls.std,
                r.total_cost.mean,
                r.total_cost.std,
                r.failures
            );
        }
    }
    print_paths(&[path]);
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn feasibility(common: &Common) -> Result<()> {
    let l = load(common)?;
    let report = feasibility_probe(&l.config, l.config.seed)?;
    std::fs::create_dir_all(&l.out).map_err(|e| Error::Io {
        path: l.out.clone(),
        source: e,
    })?;
    let path = l.out.join(PROBE_FILE);
    write_json(&path, &report)?;
    if !l.quiet {
        let verdict = if report.feasible { "feasible" } else { "infeasible" };
        let witness = report
            .witness_norm
            .map_or("none".to_string(), |w| format!("{w:.6}"));
        println!(
            "{verdict} at step {} (context {}, target arm {}, {:?} check): witness norm {witness}, hull distance {:.6}",
            report.step, report.context, report.target_arm, report.mode, report.hull_distance
        );
        match report.perturbation_norm {
            Some(n) => println!("attack: {} with norm {n:.6}", report.outcome),
            None => println!("attack: {}", report.outcome),
        }
    }
    print_paths(&[path]);
    Ok(())
}

fn poison_demo(common: &Common) -> Result<()> {
    let l = load(common)?;
    if !matches!(l.config.attack, AttackConfig::BatchPoison { .. }) {
        return Err(Error::Config(format!(
            "poison-demo needs a batch_poison attack, config has `{}`",
            l.config.attack.name()
        )));
    }
    let m = run_episode(&l.config, l.config.seed)?;
    let paths = write_results(&m, &l.config, &l.out)?;
    if !l.quiet {
        println!("{}", describe_run(&m));
        if let Some(b) = &m.batch_poison {
            println!(
                "{} batches of {}: poisoned {} rows with magnitude {:.4} at cost {:.4}",
                b.n_batches, b.batch_size, b.poisoned_rows, b.magnitude, b.poison_cost
            );
            println!(
                "after poisoning: target pulled {}/{} steps; max ||V^-1||_inf {:.3e} (bound {:.3e})",
                b.post_poison_target_pulls,
                b.post_poison_steps,
                b.max_inverse_norm,
                b.inverse_norm_bound
            );
        }
    }
    print_paths(&paths);
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::GenInstance(c) => gen_instance(c),
        Command::Run(c) => run(c),
        Command::Campaign(c) => campaign(c),
        Command::SweepGamma { common, gammas } => sweep_gamma(common, gammas),
        Command::Feasibility(c) => feasibility(c),
        Command::PoisonDemo(c) => poison_demo(c),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_configuration() {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout and are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("banditlab {}: {e}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
