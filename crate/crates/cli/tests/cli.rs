use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use countmorl_cli::commands::{cmd_count_audit, cmd_gen_data, cmd_run};
use countmorl_cli::config::{DatasetSource, PlannerKind};
use countmorl_cli::{run_experiment, run_sweep, ExperimentConfig, Stage};
use sha2::{Digest, Sha256};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small(env_id: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { env_id: env_id.into(), ..Default::default() };
    cfg.dataset.transitions = 3000;
    cfg.dataset.train_episodes = 200;
    cfg.eval.num_seeds = 2;
    cfg
}

fn countmorl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_countmorl")).args(args).output().unwrap()
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn empty_config_gives_defaults() {
    let cfg = ExperimentConfig::from_toml("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.counting.rho, 0.05);
    assert_eq!(cfg.penalty.beta, 1.0);
}

#[test]
fn unknown_fields_and_bad_values_are_config_errors() {
    for text in [
        "bogus = 1",
        "[dataset]\nnope = 2",
        "env_id = \"grid/moon\"",
        "env_id = \"random/0x2\"",
        "[counting]\nmode = \"median\"",
        "[counting]\ncode_bits = 0",
        "[dataset]\nbehavior_epsilon = 1.5",
        "[theory]\nnum_states = 5\nnum_actions = 3",
        "[sweep]\nbetas = []",
    ] {
        let err = ExperimentConfig::from_toml(text)
            .and_then(|c| c.sweep_cells().map(|_| c))
            .expect_err(text);
        assert_eq!(err.stage, Stage::Config, "{text}");
    }
}

#[test]
fn config_hash_is_stable_under_round_trip() {
    let cfg = ExperimentConfig::load(&configs_dir().join("sweep_modes.toml")).unwrap();
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(cfg.hash(), back.hash());
    assert_eq!(cfg.hash().len(), 16);
    let mut other = cfg.clone();
    other.penalty.beta += 1.0;
    assert_ne!(cfg.hash(), other.hash());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "what = 1").unwrap();
    let out = countmorl(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[config]"));

    let missing = dir.path().join("nope.toml");
    assert_eq!(countmorl(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(3));

    // One code bit with noisy features cannot separate 256 pairs.
    let collide = dir.path().join("collide.toml");
    fs::write(
        &collide,
        "env_id = \"grid/empty\"\n[dataset]\ntransitions = 2000\ntrain_episodes = 50\n\
         [counting]\nfeatures = \"noisy_one_hot\"\nrho = 0.5\ncode_bits = 1\n[eval]\nnum_seeds = 1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("audit");
    let out = countmorl(&["count-audit", "--config", collide.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(10), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("audit_summary.csv").exists());
}

#[test]
fn binary_run_succeeds_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    let mut cfg = small("random/4x2");
    cfg.eval.num_seeds = 1;
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let out_dir = dir.path().join("out");
    let out = countmorl(&[
        "run",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "42",
        "--workers",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed 42:"));
    let written = ExperimentConfig::load(&out_dir.join("config.toml")).unwrap();
    assert_eq!(written.seed, 42);
    assert!(out_dir.join("policy_seed42.csv").exists());
}

#[test]
fn zero_transition_request_writes_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("random/3x2");
    cfg.dataset.source = DatasetSource::Policy;
    cfg.dataset.transitions = 0;
    cfg.eval.num_seeds = 1;
    cmd_gen_data(&cfg, dir.path()).unwrap().into_result().unwrap();
    let text = fs::read_to_string(dir.path().join("dataset_seed0.csv")).unwrap();
    let data = countmorl_core::dataset::parse_dataset(&text).unwrap();
    assert!(data.is_empty());
    let coverage = fs::read_to_string(dir.path().join("coverage.csv")).unwrap();
    assert!(coverage.lines().nth(1).unwrap().contains(",0,0,0,6,"));
}

#[test]
fn zero_alpha_audit_has_identical_mode_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("grid/bridge");
    cfg.counting.alpha = 0.0;
    cfg.counting.code_bits = 6;
    cfg.eval.num_seeds = 1;
    let _ = cmd_count_audit(&cfg, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("audit_seed0.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (lc, avg, uc) = (col("lc"), col("avg"), col("uc"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[lc], f[avg]);
        assert_eq!(f[avg], f[uc]);
    }
}

#[test]
fn single_cell_sweep_matches_run() {
    let mut cfg = small("grid/cliff");
    cfg.counting.mode = "lc".into();
    let run = run_experiment(&cfg, 2).unwrap();
    cfg.sweep.modes = Some(vec!["lc".into()]);
    let sweep = run_sweep(&cfg, 2).unwrap();
    assert_eq!(sweep.cells.len(), 1);
    let learned: Vec<f64> = sweep.rows.iter().map(|r| r.learned_return).collect();
    let expected: Vec<f64> = run.seeds.iter().map(|r| r.learned_return).collect();
    assert_eq!(learned, expected);
}

#[test]
fn sweep_grid_order_and_size() {
    let mut cfg = small("grid/bridge");
    cfg.sweep.modes = Some(vec!["lc".into(), "uc".into()]);
    cfg.sweep.betas = Some(vec![0.5, 1.0, 2.0]);
    cfg.sweep.code_bits = Some(vec![16, 32]);
    let cells = cfg.sweep_cells().unwrap();
    assert_eq!(cells.len(), 12);
    assert_eq!(cells[0].mode, "lc");
    assert_eq!(cells[1].mode, "uc");
    assert!(cells.iter().all(|c| c.horizon == cfg.planner.horizon && c.alpha == cfg.counting.alpha));
}

#[test]
fn manifest_matches_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("random/4x2");
    cfg.planner.kind = PlannerKind::Rollout;
    cfg.planner.epochs = 5;
    cmd_run(&cfg, dir.path(), 1).unwrap();
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    let mut names = Vec::new();
    for line in manifest.lines() {
        let (sha, name) = line.split_once("  ").unwrap();
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), sha, "{name}");
        names.push(name.to_string());
    }
    for expected in ["config.toml", "run.csv", "returns.svg", "policy_seed0.csv", "policy_seed1.csv"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing");
    }
    let run = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let hash = cfg.hash();
    assert!(run.lines().skip(1).all(|l| l.starts_with(&format!("{hash},"))));
}
