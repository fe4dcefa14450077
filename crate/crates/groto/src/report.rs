//! Run artifacts: per-epoch metrics CSV, mining report and summary JSON,
//! and the cross-seed aggregate table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use groto_core::mining::MiningBranch;
use groto_core::pipeline::{RunOutcome, SessionLog};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_COLUMNS: [&str; 9] = [
    "session", "epoch", "iter", "loss_ce", "loss_con", "loss_ptd", "loss_rep", "mu_c", "pseudo_acc",
];

/// One row per epoch of every session. `pseudo_acc` is empty when the
/// session data carried no hidden labels.
pub fn metrics_csv(logs: &[SessionLog]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::data(Path::new("metrics.csv"), e.to_string());
    w.write_record(METRICS_COLUMNS).map_err(csv_err)?;
    for e in logs.iter().flat_map(|l| &l.epochs) {
        w.write_record([
            e.session.to_string(),
            e.epoch.to_string(),
            e.iter.to_string(),
            e.loss_ce.to_string(),
            e.loss_con.to_string(),
            e.loss_ptd.to_string(),
            e.loss_rep.to_string(),
            e.mu_c.to_string(),
            e.pseudo_acc.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMining {
    pub class: usize,
    pub similarity: f64,
    pub probability: f64,
    pub by_similarity: bool,
    pub by_probability: bool,
    pub mined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMining {
    pub session: usize,
    pub branch: String,
    pub similarity_threshold: f64,
    pub probability_threshold: f64,
    pub classes: Vec<ClassMining>,
    pub positive: Vec<usize>,
    /// Positive classes that kept at least one pseudo-label.
    pub refined: Vec<usize>,
    pub true_classes: Vec<usize>,
    pub pcd: f64,
    pub tcd: f64,
}

fn branch_name(b: MiningBranch) -> &'static str {
    match b {
        MiningBranch::Both => "both",
        MiningBranch::SimilarityOnly => "similarity_only",
        MiningBranch::ProbabilityOnly => "probability_only",
    }
}

/// `true_classes[t]` is the class subset of session `t + 1`.
pub fn mining_report(logs: &[SessionLog], true_classes: &[Vec<usize>]) -> Vec<SessionMining> {
    logs.iter()
        .zip(true_classes)
        .map(|(log, truth)| {
            let m = &log.mining;
            let classes = (0..m.similarity.len())
                .map(|k| {
                    let prov = m.positive.position(k).map(|i| m.positive.provenance()[i]);
                    ClassMining {
                        class: k,
                        similarity: m.similarity[k],
                        probability: m.probability[k],
                        by_similarity: prov.is_some_and(|p| p.by_similarity),
                        by_probability: prov.is_some_and(|p| p.by_probability),
                        mined: prov.is_some(),
                    }
                })
                .collect();
            SessionMining {
                session: log.session,
                branch: branch_name(m.branch).to_string(),
                similarity_threshold: m.similarity_threshold,
                probability_threshold: m.probability_threshold,
                classes,
                positive: m.positive.classes().to_vec(),
                refined: log.refined.clone(),
                true_classes: truth.clone(),
                pcd: log.pcd,
                tcd: log.tcd,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session: usize,
    pub classes: Vec<usize>,
    pub mined: Vec<usize>,
    pub pcd: f64,
    pub tcd: f64,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<ClassAccuracy>,
    /// Pseudo-labels outside the mined set, summed over epochs.
    pub outside_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_name: String,
    pub seed: u64,
    pub final_accuracy: f64,
    pub session_accuracy: Vec<f64>,
    pub sessions: Vec<SessionSummary>,
    /// `old_class[s][t]`: accuracy on session `s + 1`'s classes after
    /// session `s + 1 + t`.
    pub old_class: Vec<Vec<f64>>,
}

impl Summary {
    pub fn new(run_name: &str, seed: u64, outcome: &RunOutcome, true_classes: &[Vec<usize>]) -> Self {
        let sessions = outcome
            .logs
            .iter()
            .zip(true_classes)
            .map(|(log, truth)| SessionSummary {
                session: log.session,
                classes: truth.clone(),
                mined: log.mining.positive.classes().to_vec(),
                pcd: log.pcd,
                tcd: log.tcd,
                accuracy: log.accuracy.unwrap_or(f64::NAN),
                per_class_accuracy: log
                    .per_class_accuracy
                    .iter()
                    .map(|&(class, accuracy)| ClassAccuracy { class, accuracy })
                    .collect(),
                outside_positive: log.epochs.iter().map(|e| e.outside_positive).sum(),
            })
            .collect();
        Self {
            run_name: run_name.to_string(),
            seed,
            final_accuracy: outcome.final_accuracy,
            session_accuracy: outcome.session_accuracy.clone(),
            sessions,
            old_class: outcome.old_class.clone(),
        }
    }

    /// Named scalar metrics, in table order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = vec![("final_accuracy".to_string(), self.final_accuracy)];
        for s in &self.sessions {
            out.push((format!("session_{}_accuracy", s.session), s.accuracy));
        }
        for s in &self.sessions {
            out.push((format!("session_{}_pcd", s.session), s.pcd));
            out.push((format!("session_{}_tcd", s.session), s.tcd));
        }
        for (s, curve) in self.old_class.iter().enumerate() {
            if let Some(&last) = curve.last() {
                out.push((format!("session_{}_classes_final", s + 1), last));
            }
        }
        out
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

/// Mean and sample standard deviation of every metric over the summaries.
/// Metrics missing from some runs are aggregated over the runs that have
/// them.
pub fn aggregate(summaries: &[Summary]) -> Vec<AggregateRow> {
    let mut order: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for s in summaries {
        for (name, v) in s.metrics() {
            let i = match order.iter().position(|n| *n == name) {
                Some(i) => i,
                None => {
                    order.push(name);
                    values.push(Vec::new());
                    order.len() - 1
                }
            };
            values[i].push(v);
        }
    }
    order
        .into_iter()
        .zip(values)
        .map(|(metric, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            AggregateRow { metric, n, mean, std }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("metric,n,mean,std\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.metric, r.n, r.mean, r.std);
    }
    out
}

pub fn aggregate_text(rows: &[AggregateRow]) -> String {
    let width = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>3}  {:>16}\n", "metric", "n", "mean ± std");
    for r in rows {
        let cell = format!("{:.2} ± {:.2}", 100.0 * r.mean, 100.0 * r.std);
        let _ = writeln!(out, "{:<width$}  {:>3}  {:>16}", r.metric, r.n, cell);
    }
    out
}

/// Loads `summary.json` from each run directory. Directories without one
/// are returned by name in the second list.
pub fn collect_summaries(run_dirs: &[PathBuf]) -> Result<(Vec<Summary>, Vec<String>)> {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for dir in run_dirs {
        let path = dir.join(crate::workflow::SUMMARY_FILE);
        if path.is_file() {
            found.push(read_summary(&path)?);
        } else {
            missing.push(dir.display().to_string());
        }
    }
    Ok((found, missing))
}
