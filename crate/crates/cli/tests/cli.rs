use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use banditlab_core::harness::{
    build_instance, feasibility_probe, run_campaign, run_episode, write_campaign, write_results,
    ExperimentConfig,
};

const ACE: &str = r#"
horizon = 400
series_stride = 50

[environment]
kind = "synthetic"
dim = 4
n_arms = 3
n_contexts = 6
sigma = 0.1

[learner]
kind = "linucb"

[attack]
kind = "ace"
variant = "soft"
gamma = 0.22
"#;

const SINGLE: &str = r#"
horizon = 300
seed = 2

[environment]
kind = "synthetic"
dim = 3
n_arms = 3
n_contexts = 10
sigma = 0.1

[learner]
kind = "linucb"

[attack]
kind = "single_context"
method = "relaxed"
start_step = 200
"#;

const BATCH: &str = r#"
horizon = 600

[environment]
kind = "synthetic"
dim = 3
n_arms = 3
n_contexts = 8
sigma = 0.1

[learner]
kind = "linucb"

[attack]
kind = "batch_poison"
batch_size = 100
"#;

fn banditlab(args: &[&str]) -> Output {
    banditlab_threads(args, "2")
}

fn banditlab_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_banditlab"))
        .args(args)
        .env("BANDITLAB_THREADS", threads)
        .output()
        .expect("spawn banditlab")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let cli_out = dir.path().join("cli");
    let o = banditlab(&["run", "--config", s(&cfg), "--seed", "7", "--out", s(&cli_out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("series.csv"));

    let mut config = ExperimentConfig::load(&cfg, &[]).unwrap();
    config.seed = 7;
    config.output = Some(cli_out.clone());
    let lib_out = dir.path().join("lib");
    write_results(&run_episode(&config, 7).unwrap(), &config, &lib_out).unwrap();
    for f in ["series.csv", "summary.json"] {
        assert_eq!(
            fs::read(cli_out.join(f)).unwrap(),
            fs::read(lib_out.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn campaign_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let cli_out = dir.path().join("cli");
    let o = banditlab(&[
        "campaign",
        "--config",
        s(&cfg),
        "--set",
        "replications=3",
        "--out",
        s(&cli_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("3/3 runs"));

    let mut config = ExperimentConfig::load(&cfg, &["replications=3".into()]).unwrap();
    config.output = Some(cli_out.clone());
    let lib_out = dir.path().join("lib");
    write_campaign(&run_campaign(&config).unwrap(), &config, &lib_out).unwrap();
    for f in ["summary.json", "seed_2/series.csv"] {
        assert_eq!(
            fs::read(cli_out.join(f)).unwrap(),
            fs::read(lib_out.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn feasibility_matches_library_probe() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SINGLE);
    let out = dir.path().join("probe");
    let o = banditlab(&["feasibility", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let config = ExperimentConfig::load(&cfg, &[]).unwrap();
    let report = feasibility_probe(&config, config.seed).unwrap();
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("probe.json")).unwrap()).unwrap();
    assert_eq!(written, serde_json::to_value(&report).unwrap());

    let text = stdout(&o);
    let verdict = if report.feasible { "feasible at step" } else { "infeasible at step" };
    assert!(text.starts_with(verdict), "{text}");
    match report.witness_norm {
        Some(w) => assert!(text.contains(&format!("witness norm {w:.6}"))),
        None => assert!(text.contains("witness norm none")),
    }
}

#[test]
fn gen_instance_matches_library_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let out = dir.path().join("inst");
    let o = banditlab(&["gen-instance", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let config = ExperimentConfig::load(&cfg, &[]).unwrap();
    let expected = build_instance(&config, 4).unwrap().to_json().unwrap();
    let written = fs::read_to_string(out.join("instance.json")).unwrap();
    assert_eq!(written.trim_end(), expected.trim_end());
}

#[test]
fn generated_instance_can_drive_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let inst = dir.path().join("inst");
    assert!(banditlab(&["gen-instance", "--config", s(&cfg), "--out", s(&inst), "--quiet"])
        .status
        .success());
    let path = inst.join("instance.json");
    let text = ACE.replace(
        "kind = \"synthetic\"\ndim = 4\nn_arms = 3\nn_contexts = 6\nsigma = 0.1",
        &format!("kind = \"instance\"\npath = \"{}\"", path.display()),
    );
    let cfg2 = dir.path().join("from_instance.toml");
    fs::write(&cfg2, text).unwrap();
    let o = banditlab(&["run", "--config", s(&cfg2), "--out", s(&dir.path().join("run"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let out = dir.path().join("sweep");
    let o = banditlab(&[
        "sweep-gamma",
        "--config",
        s(&cfg),
        "--gammas",
        "0.1,0.5",
        "--set",
        "replications=2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("gamma_sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("gamma,"));
    assert!(lines[1].starts_with("0.1,"));
    assert!(lines[2].starts_with("0.5,"));
}

#[test]
fn poison_demo_reports_batch_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BATCH);
    let o = banditlab(&["poison-demo", "--config", s(&cfg), "--out", s(&dir.path().join("p"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("6 batches of 100"), "{text}");
    assert!(text.contains("after poisoning: target pulled 500/500"), "{text}");
}

#[test]
fn poison_demo_rejects_other_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let o = banditlab(&["poison-demo", "--config", s(&cfg), "--out", s(&dir.path().join("p"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch_poison"));
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = banditlab(&["run", "--config", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn bad_override_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let o = banditlab(&["run", "--config", s(&cfg), "--set", "attack.gamma=1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = banditlab(&["run", "--config", "x.toml", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_lists_every_flag() {
    let o = banditlab(&["run", "--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for flag in ["--config", "--seed", "--out", "--set", "--quiet"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    let o = banditlab(&["--help"]);
    let text = stdout(&o);
    for sub in ["gen-instance", "run", "campaign", "sweep-gamma", "feasibility", "poison-demo"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn overrides_apply_after_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let out = dir.path().join("short");
    let o = banditlab(&["run", "--config", s(&cfg), "--set", "horizon=120", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    let last = series.lines().last().unwrap();
    assert!(last.starts_with("120,"), "{last}");
}

#[test]
fn quiet_prints_only_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let out = dir.path().join("q");
    let o = banditlab(&["run", "--config", s(&cfg), "--out", s(&out), "--quiet"]);
    assert!(o.status.success());
    for line in stdout(&o).lines() {
        assert!(Path::new(line).exists(), "not a path: {line}");
    }
}

#[test]
fn campaign_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), ACE);
    let mut results = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let o = banditlab_threads(
            &["campaign", "--config", s(&cfg), "--set", "replications=4", "--out", s(&out)],
            threads,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        let series: Vec<String> = (0..4)
            .map(|i| fs::read_to_string(out.join(format!("seed_{i}/series.csv"))).unwrap())
            .collect();
        results.push((summary["summary"].clone(), series));
    }
    assert_eq!(results[0], results[1]);
}
