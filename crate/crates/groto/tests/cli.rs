//! The `groto` binary driven end to end through temporary directories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn groto(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groto"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .env_remove("GROTO_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn hash_tree(root: &Path) -> Vec<(PathBuf, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), hex));
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// Short runs: fewer epochs keep the multi-seed tests quick.
const QUICK: &str = "[adapt]\nepochs = 3\n";

#[test]
fn gen_is_deterministic_and_lists_three_sessions() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(groto(a.path(), &["gen"]));
    ok(groto(b.path(), &["gen"]));
    let ha = hash_tree(a.path());
    assert_eq!(ha, hash_tree(b.path()));
    assert_eq!(ha.len(), 1 + 2 + 2 * 3);
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(a.path().join("seed-0/scenario/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["sessions"].as_array().unwrap().len(), 3);

    let c = tempfile::tempdir().unwrap();
    ok(groto(c.path(), &["gen", "--seeds", "1"]));
    assert_ne!(
        std::fs::read(a.path().join("seed-0/scenario/session-1-train.grft")).unwrap(),
        std::fs::read(c.path().join("seed-1/scenario/session-1-train.grft")).unwrap()
    );
}

#[test]
fn config_errors_exit_2_with_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[scenario]\nclasses = 10\n");
    let out = groto(tmp.path(), &["gen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario."));

    let cfg = write_config(tmp.path(), "[adapt]\nlearning_rate = 0.1\n");
    let out = groto(tmp.path(), &["gen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("adapt.learning_rate"));

    let out = Command::new(env!("CARGO_BIN_EXE_groto"))
        .args(["--output-dir", tmp.path().to_str().unwrap(), "gen"])
        .env("GROTO_SEED", "minus-one")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_env_selects_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_groto"))
        .args(["--output-dir", tmp.path().to_str().unwrap(), "gen"])
        .env("GROTO_SEED", "7")
        .output()
        .unwrap();
    ok(out);
    assert!(tmp.path().join("seed-7/scenario/manifest.json").is_file());
    assert!(!tmp.path().join("seed-0").exists());
}

#[test]
fn corrupt_scenario_file_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(groto(tmp.path(), &["gen"]));
    let file = tmp.path().join("seed-0/scenario/source-train.grft");
    let mut bytes = std::fs::read(&file).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&file, bytes).unwrap();
    let out = groto(tmp.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("source-train.grft") && err.contains("at byte"), "{err}");
}

#[test]
fn pretrain_reports_accuracy_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        ok(groto(dir, &["gen"]));
    }
    let stdout = ok(groto(a.path(), &["pretrain"]));
    ok(groto(b.path(), &["pretrain"]));
    let acc: f64 = stdout
        .split("accuracy ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc >= 0.99, "{stdout}");
    assert_eq!(
        std::fs::read(a.path().join("seed-0/source.grmd")).unwrap(),
        std::fs::read(b.path().join("seed-0/source.grmd")).unwrap()
    );
}

#[test]
fn adapt_before_pretrain_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    ok(groto(tmp.path(), &["gen"]));
    assert_eq!(groto(tmp.path(), &["adapt"]).status.code(), Some(3));
}

#[test]
fn three_seeds_give_three_summaries_and_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUICK);
    let cfg = cfg.to_str().unwrap();
    for cmd in ["gen", "pretrain", "adapt"] {
        ok(groto(tmp.path(), &[cmd, "--config", cfg, "--seeds", "0,1,2"]));
    }
    let runs: Vec<PathBuf> = (0..3)
        .map(|s| tmp.path().join(format!("seed-{s}/runs/groto")))
        .collect();
    for r in &runs {
        for f in ["summary.json", "metrics.csv", "mining.json", "model.grmd", "bank.grmb"] {
            assert!(r.join(f).is_file(), "{}", r.join(f).display());
        }
        let csv = std::fs::read_to_string(r.join("metrics.csv")).unwrap();
        assert!(csv.starts_with("session,epoch,iter,loss_ce,loss_con,loss_ptd,loss_rep,mu_c,pseudo_acc\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 3);
    }

    let table = tmp.path().join("table.csv");
    let mut args: Vec<&str> = vec!["report", "--csv", table.to_str().unwrap()];
    args.extend(runs.iter().map(|r| r.to_str().unwrap()));
    let text = ok(groto(tmp.path(), &args));
    assert!(text.contains("final_accuracy") && text.contains("session_3_accuracy"));
    let csv = std::fs::read_to_string(&table).unwrap();
    let fin = csv.lines().find(|l| l.starts_with("final_accuracy,")).unwrap();
    let cells: Vec<&str> = fin.split(',').collect();
    assert_eq!(cells[1], "3");
    assert!(cells[2].parse::<f64>().unwrap() > 0.0);

    // a single run aggregates with zero spread
    ok(groto(tmp.path(), &["report", "--csv", table.to_str().unwrap(), runs[0].to_str().unwrap()]));
    let csv = std::fs::read_to_string(&table).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1], "1");
        assert_eq!(cells[3].parse::<f64>().unwrap(), 0.0, "{line}");
    }

    // a missing run is named and fails the command
    let ghost = tmp.path().join("seed-9/runs/groto");
    let out = groto(tmp.path(), &["report", runs[0].to_str().unwrap(), ghost.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed-9"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("final_accuracy"));
}

#[test]
fn similarity_only_mining_has_no_probability_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUICK);
    let cfg = cfg.to_str().unwrap();
    ok(groto(tmp.path(), &["gen", "--config", cfg]));
    ok(groto(tmp.path(), &["pretrain", "--config", cfg]));
    ok(groto(
        tmp.path(),
        &["adapt", "--config", cfg, "--disable-hkpcm-branch", "similarity_only"],
    ));
    ok(groto(tmp.path(), &["adapt", "--config", cfg, "--disable-ptd", "--run-name", "no-ptd"]));

    let read = |name: &str| -> serde_json::Value {
        let path = tmp.path().join(format!("seed-0/runs/{name}/mining.json"));
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    };
    let sim = read("groto-similarity-only");
    for session in sim.as_array().unwrap() {
        assert_eq!(session["branch"], "similarity_only");
        for c in session["classes"].as_array().unwrap() {
            assert_eq!(c["by_probability"], false);
            assert_eq!(c["mined"], c["by_similarity"]);
        }
    }
    let full = read("no-ptd");
    let any_prob = full
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["classes"].as_array().unwrap())
        .any(|c| c["by_probability"] == true);
    assert!(any_prob);
}

#[test]
fn bad_run_name_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = groto(tmp.path(), &["adapt", "--run-name", "../escape"]);
    assert_eq!(out.status.code(), Some(2));
}
