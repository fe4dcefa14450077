use alloc::vec::Vec;

use super::config::AdaptConfig;
use super::eval::{evaluate_final_accuracy, old_class_accuracy, per_class_accuracy};
use super::session::{adapt_session, SessionLog};
use crate::error::Result;
use crate::model::{clone_to_target, ModelParams, SourceSnapshot};
use crate::replay::MemoryBank;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub logs: Vec<SessionLog>,
    /// Accuracy over all seen classes after each session.
    pub session_accuracy: Vec<f64>,
    /// `old_class[s][t]`: accuracy on session `s + 1`'s classes after
    /// session `s + 1 + t`.
    pub old_class: Vec<Vec<f64>>,
    pub final_accuracy: f64,
    pub model: ModelParams,
    pub bank: MemoryBank,
}

/// Adapts a clone of the source model through every target session in
/// order, evaluating after each one.
pub fn run_adaptation(
    scenario: &Scenario,
    snapshot: &SourceSnapshot,
    cfg: &AdaptConfig,
) -> Result<RunOutcome> {
    run_adaptation_with(scenario, snapshot, cfg, |_, _, _| {})
}

/// [`run_adaptation`] with a callback after each session, given the session
/// log, the adapted model and the bank.
pub fn run_adaptation_with<F>(
    scenario: &Scenario,
    snapshot: &SourceSnapshot,
    cfg: &AdaptConfig,
    mut after_session: F,
) -> Result<RunOutcome>
where
    F: FnMut(&SessionLog, &ModelParams, &MemoryBank),
{
    cfg.validate()?;
    let mut model = clone_to_target(snapshot);
    let mut bank = MemoryBank::new(cfg.exemplars_per_class, scenario.classes);
    let mut logs = Vec::with_capacity(scenario.target_sessions.len());
    let mut session_accuracy = Vec::new();
    let mut old_class: Vec<Vec<f64>> = Vec::new();
    for (t, session) in scenario.target_sessions.iter().enumerate() {
        let (m, b, mut log) = adapt_session(model, session, bank, snapshot, cfg)?;
        model = m;
        bank = b;
        let through = t + 1;
        let acc = evaluate_final_accuracy(&model, scenario, through)?;
        log.accuracy = Some(acc);
        log.per_class_accuracy = per_class_accuracy(&model, scenario, through)?;
        session_accuracy.push(acc);
        old_class.push(Vec::new());
        for (s, curve) in old_class.iter_mut().enumerate() {
            let classes = &scenario.target_sessions[s].class_subset;
            curve.push(old_class_accuracy(&model, scenario, classes, through)?);
        }
        after_session(&log, &model, &bank);
        logs.push(log);
    }
    let final_accuracy = session_accuracy.last().copied().unwrap_or(0.0);
    Ok(RunOutcome {
        logs,
        session_accuracy,
        old_class,
        final_accuracy,
        model,
        bank,
    })
}
