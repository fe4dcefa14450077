//! Prototype topology distillation between source and target classifier
//! rows of the positive classes.
//!
//! With `Sᵢⱼ = μᵢ·fⱼ` and `Dᵢⱼ = 1 − cos(μᵢ, fⱼ)`:
//!
//! - compactness: `L_com = (1/N) Σⱼ Σᵢ Dᵢⱼ · pᵢ e^{Sᵢⱼ} / Σᵢ' pᵢ' e^{Sᵢ'ⱼ}`
//! - separability: `L_sep = Σᵢ pᵢ Σⱼ Dᵢⱼ · e^{Sᵢⱼ} / Σⱼ' e^{Sᵢⱼ'}`
//!
//! Both are convex combinations of cosine distances, so they lie in `[0, 2]`.
//! The source rows are constants; only the target rows receive gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{value_and_grad, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyPair {
    source: Tensor,
    target: Tensor,
    proportions: Vec<f64>,
}

impl TopologyPair {
    pub fn new(source: Tensor, target: Tensor, proportions: Vec<f64>) -> Result<Self> {
        let (source, target) = (source.as_matrix(), target.as_matrix());
        if source.rows() == 0 {
            return Err(Error::dim("topology pair needs at least one prototype"));
        }
        if source.rows() != target.rows() || source.cols() != target.cols() {
            return Err(Error::dim("source and target prototypes differ in shape"));
        }
        if proportions.len() != source.rows() {
            return Err(Error::dim("one proportion per prototype required"));
        }
        if proportions.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::degenerate("proportions must be non-negative"));
        }
        let total: f64 = proportions.iter().sum();
        if total == 0.0 {
            return Err(Error::degenerate("all class proportions are zero"));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::degenerate(alloc::format!(
                "proportions sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            source,
            target,
            proportions,
        })
    }

    pub fn source(&self) -> &Tensor {
        &self.source
    }

    pub fn target(&self) -> &Tensor {
        &self.target
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn len(&self) -> usize {
        self.source.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `pₙ = countₙ / total` over `positive`, in that order.
pub fn class_proportions(labels: &[usize], positive: &[usize]) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::degenerate("class proportions of an empty label list"));
    }
    let mut counts = alloc::vec![0usize; positive.len()];
    for l in labels {
        let i = positive
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| Error::Invariant(alloc::format!("label {l} outside the positive set")))?;
        counts[i] += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

struct Terms {
    dist: Var,
    logits: Var,
}

fn shared_terms(tape: &mut Tape, source: Var, target: Var) -> Result<Terms> {
    let ft = tape.transpose(target)?;
    let logits = tape.matmul(source, ft)?;
    let cos = tape.cosine_matrix(source, target)?;
    let neg = tape.scale(cos, -1.0)?;
    let dist = tape.add_scalar(neg, 1.0)?;
    Ok(Terms { dist, logits })
}

fn com_from(tape: &mut Tape, t: &Terms, proportions: &[f64]) -> Result<Var> {
    let n = tape.value(t.logits).rows();
    // weights normalized over the source index i for each target j
    let by_target = tape.transpose(t.logits)?;
    let w_t = tape.softmax_rows_weighted(by_target, proportions)?;
    let w = tape.transpose(w_t)?;
    let prod = tape.mul(t.dist, w)?;
    let total = tape.sum(prod)?;
    tape.scale(total, 1.0 / n as f64)
}

fn sep_from(tape: &mut Tape, t: &Terms, proportions: &[f64]) -> Result<Var> {
    let n = tape.value(t.logits).rows();
    let w = tape.softmax_rows(t.logits)?;
    let mut outer = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            outer.set(i, j, proportions[i]);
        }
    }
    let outer = tape.constant(outer)?;
    let dw = tape.mul(t.dist, w)?;
    let weighted = tape.mul(outer, dw)?;
    tape.sum(weighted)
}

/// Compactness term on a tape.
pub fn tape_com(tape: &mut Tape, source: Var, target: Var, proportions: &[f64]) -> Result<Var> {
    let t = shared_terms(tape, source, target)?;
    com_from(tape, &t, proportions)
}

/// Separability term on a tape.
pub fn tape_sep(tape: &mut Tape, source: Var, target: Var, proportions: &[f64]) -> Result<Var> {
    let t = shared_terms(tape, source, target)?;
    sep_from(tape, &t, proportions)
}

/// `L_com + L_sep` on a tape, sharing the distance and logit nodes.
pub fn tape_ptd(tape: &mut Tape, source: Var, target: Var, proportions: &[f64]) -> Result<Var> {
    let t = shared_terms(tape, source, target)?;
    let com = com_from(tape, &t, proportions)?;
    let sep = sep_from(tape, &t, proportions)?;
    tape.add(com, sep)
}

/// Loss value with gradients for both prototype sets. The source gradient
/// is always zero: source rows are frozen constants.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyLoss {
    pub value: f64,
    pub grad_target: Tensor,
    pub grad_source: Tensor,
}

fn evaluate(
    pair: &TopologyPair,
    build: fn(&mut Tape, Var, Var, &[f64]) -> Result<Var>,
) -> Result<TopologyLoss> {
    let mut grad_source = None;
    let (value, mut g) = value_and_grad(&[pair.target.clone()], |tape, p| {
        let mu = tape.constant(pair.source.clone())?;
        let loss = build(tape, mu, p[0], &pair.proportions)?;
        grad_source = Some(tape.backward(loss)?.wrt(mu));
        Ok(loss)
    })?;
    Ok(TopologyLoss {
        value,
        grad_target: g.pop().expect("one gradient"),
        grad_source: grad_source.expect("set by builder"),
    })
}

pub fn loss_com(pair: &TopologyPair) -> Result<TopologyLoss> {
    evaluate(pair, tape_com)
}

pub fn loss_sep(pair: &TopologyPair) -> Result<TopologyLoss> {
    evaluate(pair, tape_sep)
}

pub fn loss_ptd(pair: &TopologyPair) -> Result<TopologyLoss> {
    evaluate(pair, tape_ptd)
}
