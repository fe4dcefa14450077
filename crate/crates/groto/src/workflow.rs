//! The four commands as library functions over a [`RunConfig`].
//!
//! Layout under `output_dir`:
//!
//! ```text
//! seed-<n>/scenario/manifest.json
//! seed-<n>/scenario/*.grft
//! seed-<n>/source.grmd
//! seed-<n>/runs/<run-name>/{metrics.csv,mining.json,summary.json,model.grmd,bank.grmb}
//! ```

use std::path::{Path, PathBuf};

use groto_core::model::{accuracy, pretrain_source, SourceSnapshot};
use groto_core::pipeline::{run_adaptation, RunOutcome};
use groto_core::scenario::{generate_scenario, FeatureMatrix, Scenario, SessionDataset};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{self, load_feature_file, read_model, write_bank, write_feature_file, write_model};
use crate::report::{self, Summary};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SOURCE_FILE: &str = "source.grmd";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MINING_FILE: &str = "mining.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.grmd";
pub const BANK_FILE: &str = "bank.grmb";

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed-{seed}"))
}

pub fn scenario_dir(output_dir: &Path, seed: u64) -> PathBuf {
    seed_dir(output_dir, seed).join("scenario")
}

pub fn run_dir(output_dir: &Path, seed: u64, run_name: &str) -> PathBuf {
    seed_dir(output_dir, seed).join("runs").join(run_name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionEntry {
    pub index: usize,
    pub classes: Vec<usize>,
    pub train: String,
    pub test: String,
}

/// Index of the feature files making up one scenario. File names are
/// relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub classes: usize,
    pub input_dim: usize,
    pub source_train: String,
    pub source_test: String,
    pub sessions: Vec<SessionEntry>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    formats::write_bytes(path, text.as_bytes())
}

/// Writes the scenario's feature files and manifest into `dir`.
pub fn write_scenario(dir: &Path, scenario: &Scenario) -> Result<Manifest> {
    let mut manifest = Manifest {
        seed: scenario.seed,
        classes: scenario.classes,
        input_dim: scenario.input_dim,
        source_train: "source-train.grft".into(),
        source_test: "source-test.grft".into(),
        sessions: Vec::new(),
    };
    write_feature_file(&dir.join(&manifest.source_train), &scenario.source_train)?;
    write_feature_file(&dir.join(&manifest.source_test), &scenario.source_test)?;
    for (s, test) in scenario.target_sessions.iter().zip(&scenario.target_test) {
        let entry = SessionEntry {
            index: s.session_index,
            classes: s.class_subset.clone(),
            train: format!("session-{}-train.grft", s.session_index),
            test: format!("session-{}-test.grft", s.session_index),
        };
        write_feature_file(&dir.join(&entry.train), &s.inputs)?;
        write_feature_file(&dir.join(&entry.test), test)?;
        manifest.sessions.push(entry);
    }
    write_text(&dir.join(MANIFEST_FILE), &report::to_json(&manifest))?;
    Ok(manifest)
}

fn load_checked(path: &Path, dim: usize, labeled: bool) -> Result<FeatureMatrix> {
    let m = load_feature_file(path)?;
    if m.dim() != dim {
        return Err(Error::data(path, format!("dimension {} but manifest says {dim}", m.dim())));
    }
    if labeled && m.labels().is_none() {
        return Err(Error::data(path, "labels required"));
    }
    Ok(m)
}

/// Reads a scenario written by [`write_scenario`].
pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::data(&path, e.to_string()))?;
    let d = manifest.input_dim;
    let mut target_sessions = Vec::new();
    let mut target_test = Vec::new();
    for s in &manifest.sessions {
        target_sessions.push(SessionDataset {
            session_index: s.index,
            inputs: load_checked(&dir.join(&s.train), d, false)?,
            class_subset: s.classes.clone(),
        });
        target_test.push(load_checked(&dir.join(&s.test), d, true)?);
    }
    let scenario = Scenario {
        classes: manifest.classes,
        input_dim: d,
        source_train: load_checked(&dir.join(&manifest.source_train), d, true)?,
        source_test: load_checked(&dir.join(&manifest.source_test), d, true)?,
        target_sessions,
        target_test,
        seed: manifest.seed,
    };
    let labels_in_range = |m: &FeatureMatrix| m.labels().is_none_or(|l| l.iter().all(|&c| c < manifest.classes));
    if !labels_in_range(&scenario.source_train)
        || !labels_in_range(&scenario.source_test)
        || !scenario.target_test.iter().all(labels_in_range)
    {
        return Err(Error::data(&path, "a label exceeds the class count"));
    }
    scenario
        .check_invariants()
        .map_err(|e| Error::data(&path, e.to_string()))?;
    Ok(scenario)
}

/// Generates and writes the scenario of every seed. Returns the manifest
/// paths.
pub fn generate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let mut scenario = generate_scenario(&cfg.scenario_config(seed))?;
            // the files hold f32, so every later step sees the stored values
            scenario.quantize_f32();
            let dir = scenario_dir(&cfg.output_dir, seed);
            write_scenario(&dir, &scenario)?;
            Ok(dir.join(MANIFEST_FILE))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub source_test_accuracy: f64,
}

pub fn pretrain(cfg: &RunConfig) -> Result<Vec<PretrainReport>> {
    cfg.seeds
        .iter()
        .map(|&seed| {
            let scenario = load_scenario(&scenario_dir(&cfg.output_dir, seed))?;
            let mut snapshot = pretrain_source(&scenario, &cfg.pretrain_config(seed))?;
            snapshot.quantize_f32();
            let checkpoint = seed_dir(&cfg.output_dir, seed).join(SOURCE_FILE);
            write_model(&checkpoint, snapshot.params(), Some(snapshot.centroids()))?;
            Ok(PretrainReport {
                seed,
                checkpoint,
                source_test_accuracy: accuracy(snapshot.params(), &scenario.source_test)?,
            })
        })
        .collect()
}

pub fn load_snapshot(output_dir: &Path, seed: u64) -> Result<SourceSnapshot> {
    let path = seed_dir(output_dir, seed).join(SOURCE_FILE);
    read_model(&path)?.into_snapshot(&path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptReport {
    pub seed: u64,
    pub run_dir: PathBuf,
    pub summary: Summary,
}

/// Adapts one seed and writes its run directory. Also returns the full
/// outcome for callers that inspect the logs.
pub fn adapt_seed(cfg: &RunConfig, seed: u64, run_name: &str) -> Result<(AdaptReport, RunOutcome)> {
    let scenario = load_scenario(&scenario_dir(&cfg.output_dir, seed))?;
    let snapshot = load_snapshot(&cfg.output_dir, seed)?;
    if snapshot.params().input_dim() != scenario.input_dim
        || snapshot.params().classes() != scenario.classes
    {
        let path = seed_dir(&cfg.output_dir, seed).join(SOURCE_FILE);
        return Err(Error::data(&path, "checkpoint does not match the scenario's shape"));
    }
    let outcome = run_adaptation(&scenario, &snapshot, &cfg.adapt_config(seed))?;
    let truth: Vec<Vec<usize>> = scenario
        .target_sessions
        .iter()
        .map(|s| s.class_subset.clone())
        .collect();
    let dir = run_dir(&cfg.output_dir, seed, run_name);
    let summary = Summary::new(run_name, seed, &outcome, &truth);
    write_text(&dir.join(METRICS_FILE), &report::metrics_csv(&outcome.logs)?)?;
    write_text(
        &dir.join(MINING_FILE),
        &report::to_json(&report::mining_report(&outcome.logs, &truth)),
    )?;
    write_model(&dir.join(MODEL_FILE), &outcome.model, None)?;
    write_bank(&dir.join(BANK_FILE), &outcome.bank)?;
    // written last: its presence marks the run complete
    write_text(&dir.join(SUMMARY_FILE), &report::to_json(&summary))?;
    Ok((
        AdaptReport {
            seed,
            run_dir: dir,
            summary,
        },
        outcome,
    ))
}

pub fn adapt(cfg: &RunConfig, run_name: &str) -> Result<Vec<AdaptReport>> {
    cfg.seeds
        .iter()
        .map(|&seed| adapt_seed(cfg, seed, run_name).map(|(r, _)| r))
        .collect()
}
