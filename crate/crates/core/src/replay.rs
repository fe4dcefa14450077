//! Exemplar memory with herding selection and the replay loss.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{split_vars, ModelParams, ParamVars};
use crate::numerics::{value_and_grad, Tape, Tensor, Var};

/// Greedy herding without replacement: round `k` picks the unused sample
/// whose addition brings the running exemplar mean closest (L2) to the class
/// feature mean. Ties go to the lowest row.
pub fn select_exemplars(features: &Tensor, per_class: usize) -> Result<Vec<usize>> {
    let n = features.rows();
    if n == 0 || features.is_empty() {
        return Err(Error::degenerate("herding over an empty class"));
    }
    if per_class == 0 {
        return Err(Error::config("adapt.exemplars_per_class", "must be at least 1"));
    }
    let d = features.cols();
    let mut target = alloc::vec![0.0; d];
    for r in features.row_iter() {
        for (t, &v) in target.iter_mut().zip(r) {
            *t += v / n as f64;
        }
    }
    let mut used = alloc::vec![false; n];
    let mut running = alloc::vec![0.0; d];
    let mut picked = Vec::with_capacity(per_class.min(n));
    for k in 1..=per_class.min(n) {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let dist: f64 = features
                .row(i)
                .iter()
                .zip(&running)
                .zip(&target)
                .map(|((&x, &s), &t)| {
                    let diff = t - (x + s) / k as f64;
                    diff * diff
                })
                .sum();
            if dist < best_d {
                best_d = dist;
                best = Some(i);
            }
        }
        let i = best.expect("an unused sample remains");
        used[i] = true;
        for (s, &x) in running.iter_mut().zip(features.row(i)) {
            *s += x;
        }
        picked.push(i);
    }
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub input: Vec<f64>,
    /// Model prediction over all `K` classes when the entry was stored.
    pub soft_pred: Vec<f64>,
    pub label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRecord {
    pub session: usize,
    pub confidence: f64,
}

/// Exemplars one session offers for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassExemplars {
    pub class: usize,
    pub inputs: Vec<Vec<f64>>,
    pub soft_preds: Vec<Vec<f64>>,
    /// Class-level confidence used to settle cross-session conflicts.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    per_class: usize,
    classes: usize,
    entries: Vec<MemoryEntry>,
    records: BTreeMap<usize, ClassRecord>,
}

impl MemoryBank {
    pub fn new(per_class: usize, classes: usize) -> Self {
        Self {
            per_class,
            classes,
            entries: Vec::new(),
            records: BTreeMap::new(),
        }
    }

    /// Reassembles a bank from stored parts, checking every invariant.
    pub fn from_parts(
        per_class: usize,
        classes: usize,
        entries: Vec<MemoryEntry>,
        records: BTreeMap<usize, ClassRecord>,
    ) -> Result<Self> {
        let bank = Self {
            per_class,
            classes,
            entries,
            records,
        };
        bank.check()?;
        Ok(bank)
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn records(&self) -> &BTreeMap<usize, ClassRecord> {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, class: usize) -> usize {
        self.entries.iter().filter(|e| e.label == class).count()
    }

    pub fn check(&self) -> Result<()> {
        for e in &self.entries {
            if e.label >= self.classes || !self.records.contains_key(&e.label) {
                return Err(Error::Invariant(alloc::format!(
                    "memory entry for unrecorded class {}",
                    e.label
                )));
            }
            if e.soft_pred.len() != self.classes
                || e.soft_pred.iter().any(|&p| !(p >= 0.0))
                || (e.soft_pred.iter().sum::<f64>() - 1.0).abs() > 1e-6
            {
                return Err(Error::Invariant("stored prediction is not a distribution".into()));
            }
        }
        for &c in self.records.keys() {
            if self.count(c) > self.per_class {
                return Err(Error::Invariant(alloc::format!("class {c} exceeds capacity")));
            }
        }
        Ok(())
    }

    /// Stores a session's exemplars. A class seen for the first time is
    /// inserted; a class recorded by an earlier session is replaced only
    /// when the new confidence is strictly higher; a class recorded by the
    /// same session is refreshed.
    pub fn update(&mut self, offers: &[ClassExemplars], session: usize) -> Result<()> {
        for offer in offers {
            if offer.class >= self.classes {
                return Err(Error::dim(alloc::format!("class {} out of range", offer.class)));
            }
            if offer.inputs.len() != offer.soft_preds.len() {
                return Err(Error::dim("one soft prediction per exemplar required"));
            }
            let replace = match self.records.get(&offer.class) {
                None => true,
                Some(r) if r.session == session => true,
                Some(r) => offer.confidence > r.confidence,
            };
            if !replace {
                continue;
            }
            self.entries.retain(|e| e.label != offer.class);
            for (x, p) in offer
                .inputs
                .iter()
                .zip(&offer.soft_preds)
                .take(self.per_class)
            {
                self.entries.push(MemoryEntry {
                    input: x.clone(),
                    soft_pred: p.clone(),
                    label: offer.class,
                    confidence: offer.confidence,
                });
            }
            self.records.insert(
                offer.class,
                ClassRecord {
                    session,
                    confidence: offer.confidence,
                },
            );
        }
        self.entries.sort_by_key(|e| e.label);
        self.check()
    }

    pub fn inputs(&self) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.entries.iter().map(|e| e.input.as_slice()).collect();
        Tensor::from_rows(&rows)
    }

    pub fn soft_targets(&self) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.entries.iter().map(|e| e.soft_pred.as_slice()).collect();
        Tensor::from_rows(&rows)
    }
}

/// Functional form of [`MemoryBank::update`].
pub fn update_memory(
    bank: &MemoryBank,
    offers: &[ClassExemplars],
    session: usize,
) -> Result<MemoryBank> {
    let mut out = bank.clone();
    out.update(offers, session)?;
    Ok(out)
}

/// Soft cross-entropy of the stored predictions under the current model, on
/// a tape. `None` when the bank is empty.
pub fn tape_rep(
    tape: &mut Tape,
    model: &ModelParams,
    vars: &ParamVars,
    bank: &MemoryBank,
) -> Result<Option<Var>> {
    if bank.is_empty() {
        return Ok(None);
    }
    let x = tape.constant(bank.inputs()?)?;
    let z = model.tape_features(tape, vars, x)?;
    let logits = ModelParams::tape_logits(tape, vars, z)?;
    tape.softmax_cross_entropy(logits, bank.soft_targets()?, None)
        .map(Some)
}

/// `−(1/N_r) Σ ŷᵢᵀ log C(G(mᵢ))` with gradients in
/// [`ModelParams::tensors`] order; zero for an empty bank.
pub fn loss_rep(model: &ModelParams, bank: &MemoryBank) -> Result<(f64, Vec<Tensor>)> {
    if bank.is_empty() {
        return Ok((
            0.0,
            model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        ));
    }
    value_and_grad(&model.tensors(), |tape, p| {
        let vars = split_vars(model, p);
        tape_rep(tape, model, &vars, bank).map(|v| v.expect("non-empty bank"))
    })
}
