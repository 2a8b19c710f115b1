use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn graphcl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphcl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/davis64")
}

/// Writes a small config next to copies of the fixture tables.
fn workspace(extra: &str, affinities: Option<&str>) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["drugs.tsv", "targets.tsv", "davis64.tsv"] {
        fs::copy(fixtures().join(f), dir.path().join(f)).unwrap();
    }
    if let Some(text) = affinities {
        fs::write(dir.path().join("davis64.tsv"), text).unwrap();
    }
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "learning_rate = 0.001\nbatch_size = 16\ngcn_layers = 2\ndrug_dim = 8\ntarget_dim = 8\n\
             alpha = 0.5\nbeta = 0.5\nepsilon = 0.1\ntau = 0.2\nepochs = 2\n\
             protein_embed_dim = 4\nprotein_channels = [4, 4, 4]\nmax_protein_len = 64\n\
             drugs = \"drugs.tsv\"\ntargets = \"targets.tsv\"\naffinities = \"davis64.tsv\"\nout_dir = \"out\"\n{extra}"
        ),
    )
    .unwrap();
    (dir, cfg)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gradcheck_runs_without_a_config() {
    let o = graphcl(&["gradcheck"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}{}", String::from_utf8_lossy(&o.stderr));
    for group in ["gcn", "embedding", "conv", "head"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{group}\t")) && l.ends_with("true")), "{out}");
    }
    let o = graphcl(&["gradcheck", "--alpha", "0", "--beta", "0", "--epsilon", "0"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn split_reports_the_sizes() {
    let (dir, cfg) = workspace("", None);
    let o = graphcl(&["split", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["test"], 11);
    assert_eq!(v["train_pool"], 53);
    assert!(dir.path().join("out/split.json").exists());
}

#[test]
fn train_then_eval() {
    let (dir, cfg) = workspace("", None);
    let cfg = cfg.to_str().unwrap();
    let o = graphcl(&["train", "--config", cfg, "--fold", "2", "--epochs", "3", "--lr", "0.002"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let log = fs::read_to_string(out.join("epochs.tsv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("learning_rate = 0.002"));

    let best = out.join("best.ckpt");
    let o = graphcl(&["eval", "--config", cfg, "--checkpoint", best.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 11);
    assert!(out.join("eval_test.json").exists());

    let o = graphcl(&["train", "--config", cfg, "--fold", "2", "--epochs", "4", "--lr", "0.002", "--resume", out.join("last.ckpt").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("epochs.tsv")).unwrap().lines().count(), 5);
}

#[test]
fn ablate_prints_the_table() {
    let (_dir, cfg) = workspace("", None);
    let o = graphcl(&["ablate", "--config", cfg.to_str().unwrap(), "--mode", "beta-sweep", "--seeds", "1", "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 6);
}

#[test]
fn config_problems_exit_with_two() {
    let (_dir, cfg) = workspace("gamma = 1\n", None);
    assert_eq!(code(&graphcl(&["train", "--config", cfg.to_str().unwrap()])), 2);
    let (_dir, cfg) = workspace("", None);
    assert_eq!(code(&graphcl(&["train", "--config", cfg.to_str().unwrap(), "--tau", "0"])), 2);
    assert_eq!(code(&graphcl(&["train", "--config", "/nonexistent.toml"])), 2);
    assert_eq!(code(&graphcl(&["train"])), 2, "missing --config is a usage error");
}

#[test]
fn data_problems_exit_with_three() {
    let (_dir, cfg) = workspace("", Some("drug_id\ttarget_id\taffinity\nD000\tT999\t5.0\n"));
    let o = graphcl(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("davis64.tsv:2"));
}

#[test]
fn numeric_failure_exits_with_four() {
    let mut rows = fs::read_to_string(fixtures().join("davis64.tsv")).unwrap();
    rows = rows.replacen("\t5.0000\n", "\t1e300\n", 1);
    let (dir, cfg) = workspace("", Some(&rows));
    let o = graphcl(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/last_good.ckpt").exists());
}

#[test]
fn transform_flag_reaches_the_config() {
    let (dir, cfg) = workspace("", None);
    let cfg = cfg.to_str().unwrap();
    let o = graphcl(&["train", "--config", cfg, "--epochs", "1", "--transform", "pkd"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let saved = fs::read_to_string(dir.path().join("out/config.toml")).unwrap();
    assert!(saved.contains("affinity_transform = \"pkd\""), "{saved}");
    assert_eq!(code(&graphcl(&["train", "--config", cfg, "--transform", "log"])), 2);
}
