use alloc::string::String;
use alloc::vec::Vec;

use super::config::AdaptConfig;
use super::eval::mined_metrics;
use super::schedule::mu_schedule;
use crate::error::{Error, Result};
use crate::mining::{mine_session, refine_positive_set, MiningReport};
use crate::model::{extract_features, predict, split_vars, tape_cross_entropy, ModelParams, Sgd, SourceSnapshot};
use crate::numerics::{mean, softmax, value_and_grad, Tape, Tensor, Var};
use crate::replay::{select_exemplars, tape_rep, ClassExemplars, MemoryBank};
use crate::rng::Rng;
use crate::scenario::SessionDataset;
use crate::selforg::{
    assign_pseudo_labels, augment_features, balance_prototypes, coarse_prototypes, confidences,
    fine_selection, initial_labels_from_logits, tape_nt_xent, Grain, Prototype, PrototypeBank,
};
use crate::topodistill::{class_proportions, tape_ptd};

/// Per-epoch training record; loss components are means over the epoch's
/// minibatches.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub session: usize,
    pub epoch: usize,
    /// Iterations completed in this session at the end of the epoch.
    pub iter: u64,
    pub loss_ce: f64,
    pub loss_con: f64,
    pub loss_ptd: f64,
    pub loss_rep: f64,
    /// Contrastive coefficient at the epoch's last iteration.
    pub mu_c: f64,
    /// Agreement of the epoch's pseudo-labels with the hidden labels, when
    /// those are available.
    pub pseudo_acc: Option<f64>,
    /// Pseudo-labels that fell outside the positive set (always zero in a
    /// successful run).
    pub outside_positive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub session: usize,
    pub mining: MiningReport,
    /// Positive set after dropping mined classes that received no labels.
    pub refined: Vec<usize>,
    pub pcd: f64,
    pub tcd: f64,
    pub epochs: Vec<EpochLog>,
    /// Filled in by the run driver after evaluation.
    pub accuracy: Option<f64>,
    pub per_class_accuracy: Vec<(usize, f64)>,
}

/// Outcome of one prototype identification pass.
struct Identified {
    labels: Vec<usize>,
    prototypes: Option<PrototypeBank>,
}

/// Restricted argmax labels, then (unless disabled) coarse and fine
/// prototypes, balancing, and relabeling of the non-prototype samples.
fn identify(
    identifier: &ModelParams,
    snapshot: &SourceSnapshot,
    inputs: &Tensor,
    positive: &[usize],
    cfg: &AdaptConfig,
    rng: &mut Rng,
) -> Result<Identified> {
    let feats = extract_features(identifier, inputs)?;
    let logits = feats.matmul_t(&identifier.classifier)?;
    let initial = initial_labels_from_logits(&logits, positive)?;
    if cfg.ablation.disable_ptfs {
        return Ok(Identified {
            labels: initial,
            prototypes: None,
        });
    }
    let conf = confidences(identifier, inputs)?;
    let source_rows = &snapshot.params().classifier;
    // a source row read as a feature, scored by the identifying classifier
    let row_logits = source_rows.matmul_t(&identifier.classifier)?;
    let source_conf = row_logits
        .row_iter()
        .map(|r| softmax(r).map(|p| p.iter().copied().fold(0.0, f64::max)))
        .collect::<Result<Vec<_>>>()?;
    let mut bank = coarse_prototypes(&feats, &initial, &conf, source_rows, &source_conf, positive)?;

    let augmented = augment_features(inputs, rng, &cfg.augment)?;
    let conf_aug = confidences(identifier, &augmented)?;
    if inputs.rows() >= 2 {
        let fine = fine_selection(&conf, &conf_aug)?;
        for &i in &fine.admitted {
            bank.push(
                initial[i],
                Prototype {
                    feature: feats.row(i).to_vec(),
                    grain: Grain::Fine,
                    confidence: fine.conf_avg[i],
                    sample: Some(i),
                },
            )?;
        }
    }
    let bank = balance_prototypes(&bank)?;

    let mut labels = assign_pseudo_labels(&feats, &bank)?;
    for (sample, class) in bank.sample_labels() {
        labels[sample] = class;
    }
    Ok(Identified {
        labels,
        prototypes: Some(bank),
    })
}

/// Herded exemplars of every labeled positive class, with soft predictions
/// of `model` and a per-class confidence.
fn memory_offers(
    model: &ModelParams,
    inputs: &Tensor,
    labels: &[usize],
    positive: &[usize],
    prototypes: Option<&PrototypeBank>,
    per_class: usize,
) -> Result<Vec<ClassExemplars>> {
    let feats = extract_features(model, inputs)?;
    let preds = predict(model, inputs)?;
    let conf = confidences(model, inputs)?;
    let mut offers = Vec::new();
    for &c in positive {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let picks = select_exemplars(&feats.select_rows(&members), per_class)?;
        let rows: Vec<usize> = picks.iter().map(|&k| members[k]).collect();
        let confidence = match prototypes {
            Some(bank) if !bank.of(c).is_empty() => bank.class_confidence(c),
            _ => mean(&members.iter().map(|&i| conf[i]).collect::<Vec<_>>()),
        };
        offers.push(ClassExemplars {
            class: c,
            inputs: rows.iter().map(|&i| inputs.row(i).to_vec()).collect(),
            soft_preds: rows.iter().map(|&i| preds.row(i).to_vec()).collect(),
            confidence,
        });
    }
    Ok(offers)
}

fn tag(component: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite { component: op } => Error::NonFinite {
            component: alloc::format!("{component} ({op})"),
        },
        other => other,
    }
}

#[derive(Default)]
struct StepLosses {
    ce: f64,
    con: f64,
    ptd: f64,
    rep: f64,
}

/// Adapts `model` to one unlabeled target session.
///
/// Mining runs once with the frozen source model. Each epoch re-identifies
/// pseudo-labels (with the source model during the first `warm_iters`
/// iterations, with the target model afterwards), then runs minibatch SGD
/// on `L_ce + μ·L_con + L_ptd + L_rep`. Classifier rows outside the
/// positive set never move.
pub fn adapt_session(
    model: ModelParams,
    session: &SessionDataset,
    bank: MemoryBank,
    snapshot: &SourceSnapshot,
    cfg: &AdaptConfig,
) -> Result<(ModelParams, MemoryBank, SessionLog)> {
    cfg.validate()?;
    model.check()?;
    let inputs = session.inputs.values();
    if inputs.rows() == 0 {
        return Err(Error::degenerate("session has no samples"));
    }
    let hidden = session.inputs.labels();
    let ablation = cfg.ablation;
    let mut rng = Rng::new(cfg.seed).fork(session.session_index as u64);
    let mut model = model;
    let mut bank = bank;

    let mining = mine_session(snapshot, inputs, ablation.mining_branch)?;
    let mut positive: Vec<usize> = mining.positive.classes().to_vec();
    let (pcd, tcd) = mined_metrics(&positive, &session.class_subset);

    let k = model.classes();
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    let mut iter: u64 = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut last: Option<Identified> = None;
    let mut order: Vec<usize> = (0..inputs.rows()).collect();

    for epoch in 0..cfg.epochs {
        let identifier = if iter < cfg.warm_iters {
            snapshot.params()
        } else {
            &model
        };
        let found = identify(identifier, snapshot, inputs, &positive, cfg, &mut rng)?;
        let outside = found
            .labels
            .iter()
            .filter(|l| !positive.contains(l))
            .count();
        if outside > 0 {
            return Err(Error::Invariant(alloc::format!(
                "{outside} pseudo-labels outside the positive set in epoch {epoch}"
            )));
        }
        if epoch == 0 {
            positive = refine_positive_set(&mining.positive, &found.labels)
                .classes()
                .to_vec();
        }
        let labels = &found.labels;
        let pseudo_acc = hidden.map(|h| {
            labels.iter().zip(h).filter(|(a, b)| a == b).count() as f64 / h.len() as f64
        });
        let proportions = class_proportions(labels, &positive)?;
        let mut frozen = alloc::vec![true; k];
        for &c in &positive {
            frozen[c] = false;
        }
        let mut selector = Tensor::zeros(&[positive.len(), k]);
        for (r, &c) in positive.iter().enumerate() {
            selector.set(r, c, 1.0);
        }
        let source_rows = snapshot.params().classifier.select_rows(&positive);

        rng.shuffle(&mut order);
        let mut sums = StepLosses::default();
        let mut steps = 0usize;
        let mut mu_c = mu_schedule(iter, cfg.mu_c0, cfg.beta);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            mu_c = mu_schedule(iter, cfg.mu_c0, cfg.beta);
            let x = inputs.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let x_aug = if ablation.contrastive_active() {
                Some(augment_features(&x, &mut rng, &cfg.augment)?)
            } else {
                None
            };
            let mut parts = StepLosses::default();
            let (total, grads) = value_and_grad(&model.tensors(), |tape, p| {
                let vars = split_vars(&model, p);
                let xv = tape.constant(x.clone())?;
                let z = model.tape_features(tape, &vars, xv)?;
                let logits = ModelParams::tape_logits(tape, &vars, z)?;
                let ce = tape_cross_entropy(tape, logits, &y, k).map_err(tag("loss_ce"))?;
                parts.ce = tape.scalar(ce);
                let mut total = ce;
                if let Some(xa) = &x_aug {
                    let con = contrastive(tape, &model, &vars, z, xa, cfg.temperature)
                        .map_err(tag("loss_con"))?;
                    parts.con = tape.scalar(con);
                    let weighted = tape.scale(con, mu_c)?;
                    total = tape.add(total, weighted)?;
                }
                if !ablation.disable_ptd {
                    let ptd = distill(tape, vars.classifier, &selector, &source_rows, &proportions)
                        .map_err(tag("loss_ptd"))?;
                    parts.ptd = tape.scalar(ptd);
                    total = tape.add(total, ptd)?;
                }
                if !ablation.disable_replay {
                    if let Some(rep) =
                        tape_rep(tape, &model, &vars, &bank).map_err(tag("loss_rep"))?
                    {
                        parts.rep = tape.scalar(rep);
                        total = tape.add(total, rep)?;
                    }
                }
                Ok(total)
            })
            .map_err(tag("total objective"))?;
            if !total.is_finite() {
                return Err(Error::NonFinite {
                    component: String::from("total objective"),
                });
            }
            let n_params = grads.len();
            let mut frozen_rows: Vec<Option<&[bool]>> = alloc::vec![None; n_params];
            frozen_rows[n_params - 1] = Some(&frozen);
            let mut slots = model.tensors_mut();
            opt.step(&mut slots, &grads, &frozen_rows);
            if !model.is_finite() {
                return Err(Error::NonFinite {
                    component: String::from("parameter update"),
                });
            }
            iter += 1;
            sums.ce += parts.ce;
            sums.con += parts.con;
            sums.ptd += parts.ptd;
            sums.rep += parts.rep;
            steps += 1;

            if !ablation.disable_replay && iter % cfg.memory_update_every as u64 == 0 {
                let offers = memory_offers(
                    &model,
                    inputs,
                    labels,
                    &positive,
                    found.prototypes.as_ref(),
                    cfg.exemplars_per_class,
                )?;
                bank.update(&offers, session.session_index)?;
            }
        }
        let denom = steps.max(1) as f64;
        epochs.push(EpochLog {
            session: session.session_index,
            epoch,
            iter,
            loss_ce: sums.ce / denom,
            loss_con: sums.con / denom,
            loss_ptd: sums.ptd / denom,
            loss_rep: sums.rep / denom,
            mu_c,
            pseudo_acc,
            outside_positive: outside,
        });
        last = Some(found);
    }

    if !ablation.disable_replay {
        let (labels, prototypes) = match &last {
            Some(found) => (found.labels.clone(), found.prototypes.as_ref()),
            None => {
                let logits = model.logits(inputs)?;
                let labels = initial_labels_from_logits(&logits, &positive)?;
                positive = refine_positive_set(&mining.positive, &labels)
                    .classes()
                    .to_vec();
                (labels, None)
            }
        };
        let offers = memory_offers(
            &model,
            inputs,
            &labels,
            &positive,
            prototypes,
            cfg.exemplars_per_class,
        )?;
        bank.update(&offers, session.session_index)?;
    }

    let log = SessionLog {
        session: session.session_index,
        mining,
        refined: positive,
        pcd,
        tcd,
        epochs,
        accuracy: None,
        per_class_accuracy: Vec::new(),
    };
    Ok((model, bank, log))
}

fn contrastive(
    tape: &mut Tape,
    model: &ModelParams,
    vars: &crate::model::ParamVars,
    z: Var,
    augmented: &Tensor,
    temperature: f64,
) -> Result<Var> {
    let xa = tape.constant(augmented.clone())?;
    let za = model.tape_features(tape, vars, xa)?;
    tape_nt_xent(tape, z, za, temperature)
}

fn distill(
    tape: &mut Tape,
    classifier: Var,
    selector: &Tensor,
    source_rows: &Tensor,
    proportions: &[f64],
) -> Result<Var> {
    let sel = tape.constant(selector.clone())?;
    let target = tape.matmul(sel, classifier)?;
    let source = tape.constant(source_rows.clone())?;
    tape_ptd(tape, source, target, proportions)
}
