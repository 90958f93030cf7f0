use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chainttt::config_file::{load_config, parse_config, to_toml};
use chainttt::CliError;

const SMALL: &str = r#"
seed = 4
num_iterations = 3

[env]
grid_size = 6
num_stages = 1
max_horizon_cap = 32

[progress]
delta_milestone = 8
delta_check = 4

[eval]
episodes = 5
"#;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chainttt"));
    cmd.env_remove("CHAINTTT_OUTPUT_ROOT");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

fn config_error(text: &str) -> String {
    match parse_config(text, &[]) {
        Err(CliError::Config(m)) => m,
        other => panic!("expected a config error, got {:?}", other),
    }
}

#[test]
fn minimal_file_is_fully_defaulted() {
    let c = parse_config("seed = 3\n[task]\ntask_id = \"demo\"\n", &[]).unwrap();
    assert_eq!(c.master_seed, 3);
    assert_eq!(c.task.task_id, "demo");
    assert_eq!(c.progress.delta_milestone, 64);
    assert_eq!(c.progress.delta_check, 16);
    assert_eq!(c.progress.tau_threshold, 0.95);
    assert_eq!(c.grpo.group_size, 8);
    assert_eq!(c.grpo.clip_epsilon, 0.2);
    assert_eq!(c.temperature, 1.2);
    assert_eq!(c.task.stage_targets.len(), 3);
    assert_eq!(c.schedule.horizon_at(0).unwrap(), 512);
}

#[test]
fn seed_override_wins() {
    let c = parse_config(SMALL, &[("seed".into(), "9".into())]).unwrap();
    assert_eq!(c.master_seed, 9);
    let c = parse_config(SMALL, &[("grpo.step_size".into(), "0.5".into())]).unwrap();
    assert_eq!(c.grpo.step_size, 0.5);
}

#[test]
fn check_interval_above_milestone_interval_names_both_fields() {
    let m = config_error("[progress]\ndelta_milestone = 16\ndelta_check = 32\n");
    assert!(
        m.contains("delta_check") && m.contains("delta_milestone"),
        "{}",
        m
    );
}

#[test]
fn unknown_keys_list_the_valid_ones() {
    let m = config_error("[grpo]\ngroup_sise = 4\n");
    assert!(m.contains("group_sise"), "{}", m);
    assert!(
        m.contains("group_size") && m.contains("clip_epsilon"),
        "{}",
        m
    );
    let m = config_error("iterations = 4\n");
    assert!(m.contains("num_iterations"), "{}", m);
}

#[test]
fn parse_errors_carry_a_line_number() {
    let m = config_error("seed = 1\n[env]\ngrid_size = = 4\n");
    assert!(m.contains("line 3"), "{}", m);
}

#[test]
fn seed_alias_conflicts_are_rejected() {
    let m = config_error("seed = 1\nmaster_seed = 2\n");
    assert!(m.contains("seed"), "{}", m);
}

#[test]
fn ladder_shorthand_builds_a_geometric_schedule() {
    let text = format!("{}\n[schedule]\nladder = 2\n", SMALL);
    let c = parse_config(&text, &[]).unwrap();
    assert_eq!(
        c.schedule,
        chainttt_core::HorizonSchedule::geometric(32, 2, 1)
    );
    let m = config_error("[schedule]\nladder = 0\n");
    assert!(m.contains("ladder"), "{}", m);
}

#[test]
fn resolved_config_round_trips() {
    for text in [SMALL, "", "[critic]\nsigma = 5.0\ndrift_per_step = 0.1\n"] {
        let c = parse_config(text, &[]).unwrap();
        assert_eq!(parse_config(&to_toml(&c).unwrap(), &[]).unwrap(), c);
    }
}

#[test]
fn ttt_leaves_exactly_four_artifacts_and_eval_reads_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let out = tmp.path().join("out");
    let o = run(bin()
        .args(["ttt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let sr: f64 = stdout(&o).parse().unwrap();
    assert!((0.0..=1.0).contains(&sr));

    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["config.toml", "metrics.jsonl", "params.bin", "summary.csv"]
    );

    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("mean_reward").is_some() && v.get("h_max").is_some());
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("variant,sr,f1,reward_calls,seeds,wall_time_s\nttt,"));

    let resolved = load_config(&out.join("config.toml"), &[]).unwrap();
    assert_eq!(resolved, load_config(&cfg, &[]).unwrap());

    let o = run(bin()
        .args(["eval", "--config"])
        .arg(out.join("config.toml"))
        .arg("--params")
        .arg(out.join("params.bin")));
    assert!(o.status.success(), "{}", stderr(&o));
    let eval_sr: f64 = stdout(&o).parse().unwrap();
    assert_eq!(eval_sr, sr);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let o = run(bin()
        .env("CHAINTTT_OUTPUT_ROOT", tmp.path().join("root"))
        .args(["pretrain", "--config"])
        .arg(&cfg)
        .args(["--seed", "7"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("root").join("pretrain-chain-seed7");
    assert!(dir.join("params.bin").is_file());
    assert!(dir.join("config.toml").is_file());
}

#[test]
fn bad_configs_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[progress]\ndelta_check = 128\n");
    let o = run(bin()
        .args(["ttt", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta_check"));
    assert!(o.stdout.is_empty());

    let o = run(bin()
        .args(["pretrain", "--config"])
        .arg(tmp.path().join("missing.toml")));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn runtime_failures_exit_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let o = run(bin()
        .args(["eval", "--config"])
        .arg(&cfg)
        .arg("--params")
        .arg(tmp.path().join("nope.bin")));
    assert_eq!(o.status.code(), Some(3));

    // Params of the wrong shape for the config.
    let other = write(tmp.path(), "other.toml", "[env]\ngrid_size = 5\n");
    let params = chainttt_core::PolicyParams::zeros(1, 6, 10).unwrap();
    fs::write(tmp.path().join("p.bin"), params.to_bytes()).unwrap();
    let o = run(bin()
        .args(["eval", "--config"])
        .arg(&other)
        .arg("--params")
        .arg(tmp.path().join("p.bin")));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("shape"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let o = run(bin().arg("train"));
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("usage"));
}

#[test]
fn critic_bench_writes_one_row_per_estimator() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let out = tmp.path().join("bench");
    let o = run(bin()
        .args(["critic-bench", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "0,1"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("accumulative,,"));
    assert!(rows.iter().all(|r| r.contains(",0;1,")));
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn ablate_writes_a_log_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", SMALL);
    let out = tmp.path().join("ablate");
    let o = run(bin()
        .args(["ablate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--table", "horizon", "--seeds", "0"]));
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["fixed-horizon", "progressive-2", "progressive-3"] {
        let log = fs::read_to_string(out.join(format!("metrics-{}.jsonl", name))).unwrap();
        assert_eq!(log.lines().count(), 3, "{}", name);
        assert!(log.contains(&format!("\"variant\":\"{}\"", name)));
    }
    assert_eq!(
        fs::read_to_string(out.join("summary.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}
