use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppl_core::cli::RunConfig;
use ppl_core::trainer::{load_checkpoint, Checkpoint};

const TINY: &str = r#"{
  "seed": 5,
  "policy": {"d_model": 8, "layers": 1, "heads": 2, "prompt_len": 2, "components": 3,
             "obs_history": 1, "horizon": 2, "exec_horizon": 2, "diffusion_steps": 3,
             "schedule": "cosine", "text_dim": 4, "flow_dim": 4},
  "train": {"epochs": 2, "batch_size": 4, "eval_every": 1, "steps_per_epoch": 2,
            "lifelong_components": 2, "skills": ["reach-target", "grasp-block"]},
  "lifelong_skills": ["grasp-disc", "push-block-left"],
  "demos_per_skill": 2,
  "eval_episodes": 2
}"#;

fn ppl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = ppl(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
    pretrain: PathBuf,
}

fn prepared() -> Run {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("run.json");
    std::fs::write(&config, TINY).unwrap();
    let data = root.join("data");
    let pretrain = root.join("pre.pplc");
    ok(&["gen-data", "--config", s(&config), "--out", s(&data)]);
    ok(&["pretrain", "--config", s(&config), "--data", s(&data), "--out", s(&pretrain)]);
    Run {
        _dir: dir,
        root,
        config,
        data,
        pretrain,
    }
}

fn csv_rows(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().skip(1).map(str::to_string).collect()
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(ppl(&[]).status.code(), Some(2));
    assert_eq!(ppl(&["pretrain", "--out", "x"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = ppl(&["gen-data", "--config", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "epochs": 3}"#).unwrap();
    assert_eq!(ppl(&["gen-data", "--config", s(&bad), "--out", s(dir.path())]).status.code(), Some(2));
    std::fs::write(&bad, r#"{"policy": {"heads": 3}}"#).unwrap();
    assert_eq!(ppl(&["gen-data", "--config", s(&bad), "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let out = ppl(&["eval", "--ckpt", "/nonexistent.pplc", "--skills", "reach-target", "--csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_commands_write_their_artifacts() {
    let r = prepared();
    for skill in ["reach-target", "grasp-block", "grasp-disc", "push-block-left"] {
        let f = r.data.join(format!("{skill}.ppld"));
        assert_eq!(&std::fs::read(&f).unwrap()[..4], b"PPLD");
    }
    assert_eq!(csv_rows(&r.root.join("pre.csv")).len(), 2);

    let ckpt: Checkpoint<f64> = load_checkpoint(&r.pretrain).unwrap();
    assert_eq!(ckpt.meta.config, RunConfig::load(&r.config).unwrap().to_value());

    let l1 = r.root.join("l1.pplc");
    ok(&["lifelong", "--config", s(&r.config), "--ckpt", s(&r.pretrain), "--skill", "grasp-disc", "--data", s(&r.data), "--out", s(&l1)]);
    let l2 = r.root.join("l2.pplc");
    ok(&["lifelong", "--config", s(&r.config), "--ckpt", s(&l1), "--skill", "push-block-left", "--data", s(&r.data), "--out", s(&l2)]);
    let rows = csv_rows(&r.root.join("l2.csv"));
    assert_eq!(rows.len(), 4);
    let last: Vec<&str> = rows[3].split(',').collect();
    assert_eq!(last[0], "push-block-left");
    assert!(!last[5].is_empty() && !last[6].is_empty());
    let out = ppl(&["lifelong", "--config", s(&r.config), "--ckpt", s(&l2), "--skill", "grasp-disc", "--data", s(&r.data), "--out", s(&r.root.join("again.pplc"))]);
    assert!(!out.status.success());

    let l2c: Checkpoint<f64> = load_checkpoint(&l2).unwrap();
    assert_eq!(l2c.net.pool.size(), 3 + 2 + 2);

    for mode in ["sequential", "replay"] {
        let out_path = r.root.join(format!("{mode}.pplc"));
        ok(&["baseline", "--mode", mode, "--config", s(&r.config), "--ckpt", s(&r.pretrain), "--skill", "grasp-disc", "--data", s(&r.data), "--out", s(&out_path)]);
        assert_eq!(csv_rows(&out_path.with_extension("csv")).len(), 3);
        let c: Checkpoint<f64> = load_checkpoint(&out_path).unwrap();
        assert_eq!(c.net.pool.size(), 3);
    }

    let w = r.root.join("w.csv");
    ok(&["export-weights", "--ckpt", s(&l2), "--skill", "push-block-left", "--episodes", "2", "--csv", s(&w)]);
    assert!(csv_rows(&w).len() > 0);
    assert!(r.root.join("w_summary.csv").exists());
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let r = prepared();
    let a = r.root.join("a.csv");
    let b = r.root.join("b.csv");
    for p in [&a, &b] {
        ok(&["eval", "--ckpt", s(&r.pretrain), "--skills", "reach-target,grasp-disc", "--episodes", "3", "--seed", "7", "--csv", s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(csv_rows(&a).len(), 2);
    let out = ppl(&["eval", "--ckpt", s(&r.pretrain), "--skills", "fly", "--csv", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn prompt_sweep_writes_one_row_per_count() {
    let r = prepared();
    let out = r.root.join("sweep.csv");
    ok(&["sweep-prompts", "--config", s(&r.config), "--counts", "4,16,64", "--data", s(&r.data), "--out", s(&out)]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 3);
    for (row, m) in rows.iter().zip([4, 16, 64]) {
        assert!(row.contains(&format!("sweep-m{m}")));
    }
}
