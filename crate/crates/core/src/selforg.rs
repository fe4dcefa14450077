//! Positive-class target feature self-organization.
//!
//! Pseudo-labels come from a bank of class prototypes at two granularities:
//!
//! - coarse: the source classifier rows of the positive classes, plus target
//!   features closer to their class centroid than the class's mean cosine
//!   distance;
//! - fine: target features whose prediction confidence is high and stable
//!   under augmentation.
//!
//! Prototype features keep their initial label; every other sample takes the
//! class whose prototypes are nearest on average in cosine distance. Training
//! then minimizes cross-entropy on those labels plus an NT-Xent term between
//! each sample and its augmented view.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{predict, tape_cross_entropy, ModelParams};
use crate::numerics::{cosine_distance, mean, norm, value_and_grad, Tape, Tensor, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grain {
    SourceCoarse,
    TargetCoarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub feature: Vec<f64>,
    pub grain: Grain,
    pub confidence: f64,
    /// Row of the session data this prototype was taken from.
    pub sample: Option<usize>,
}

/// Prototypes grouped by positive class (ascending class order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrototypeBank {
    classes: Vec<usize>,
    prototypes: Vec<Vec<Prototype>>,
}

impl PrototypeBank {
    pub fn new(positive: &[usize]) -> Self {
        let mut classes = positive.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let prototypes = vec![Vec::new(); classes.len()];
        Self {
            classes,
            prototypes,
        }
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn of(&self, class: usize) -> &[Prototype] {
        match self.classes.binary_search(&class) {
            Ok(i) => &self.prototypes[i],
            Err(_) => &[],
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.prototypes.iter().map(Vec::len).collect()
    }

    /// Adds a prototype. A sample already present in the class (from either
    /// grain) is not added twice.
    pub fn push(&mut self, class: usize, p: Prototype) -> Result<()> {
        let i = self
            .classes
            .binary_search(&class)
            .map_err(|_| Error::Invariant(alloc::format!("prototype for non-positive class {class}")))?;
        if let Some(s) = p.sample {
            if self.prototypes[i].iter().any(|q| q.sample == Some(s)) {
                return Ok(());
            }
        }
        self.prototypes[i].push(p);
        Ok(())
    }

    /// `(class, sample)` for every prototype taken from session data.
    pub fn sample_labels(&self) -> Vec<(usize, usize)> {
        self.classes
            .iter()
            .zip(&self.prototypes)
            .flat_map(|(&c, ps)| ps.iter().filter_map(move |p| p.sample.map(|s| (s, c))))
            .collect()
    }

    /// Mean prototype confidence of `class`.
    pub fn class_confidence(&self, class: usize) -> f64 {
        let c: Vec<f64> = self.of(class).iter().map(|p| p.confidence).collect();
        mean(&c)
    }
}

/// Argmax of the classifier restricted to `positive` classes; ties go to the
/// lowest class index.
pub fn initial_labels_from_logits(logits: &Tensor, positive: &[usize]) -> Result<Vec<usize>> {
    let mut pos = positive.to_vec();
    pos.sort_unstable();
    if pos.is_empty() {
        return Err(Error::degenerate("initial pseudo-labels need a positive class"));
    }
    if pos.iter().any(|&c| c >= logits.cols()) {
        return Err(Error::dim("positive class outside the classifier"));
    }
    Ok(logits
        .row_iter()
        .map(|row| {
            let mut best = pos[0];
            for &c in &pos[1..] {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

pub fn initial_pseudo_labels(
    model: &ModelParams,
    inputs: &Tensor,
    positive: &[usize],
) -> Result<Vec<usize>> {
    initial_labels_from_logits(&model.logits(inputs)?, positive)
}

/// Source coarse prototypes (one per positive class, from `source_rows`)
/// plus target coarse prototypes: features with `d(x, cₙ) < τₛ`, where `cₙ`
/// is the class centroid of the initially labeled features and `τₛ` their
/// mean cosine distance to it.
pub fn coarse_prototypes(
    features: &Tensor,
    labels: &[usize],
    confidence: &[f64],
    source_rows: &Tensor,
    source_confidence: &[f64],
    positive: &[usize],
) -> Result<PrototypeBank> {
    if labels.len() != features.rows() || confidence.len() != features.rows() {
        return Err(Error::dim("labels and confidences must match feature rows"));
    }
    let mut bank = PrototypeBank::new(positive);
    for &n in bank.classes.clone().iter() {
        bank.push(
            n,
            Prototype {
                feature: source_rows.row(n).to_vec(),
                grain: Grain::SourceCoarse,
                confidence: source_confidence[n],
                sample: None,
            },
        )?;
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == n).collect();
        if members.is_empty() {
            continue;
        }
        let mut centroid = vec![0.0; features.cols()];
        for &i in &members {
            for (c, &f) in centroid.iter_mut().zip(features.row(i)) {
                *c += f;
            }
        }
        for c in &mut centroid {
            *c /= members.len() as f64;
        }
        if norm(&centroid) == 0.0 {
            continue;
        }
        let dist = members
            .iter()
            .map(|&i| cosine_distance(features.row(i), &centroid))
            .collect::<Result<Vec<_>>>()?;
        let tau = mean(&dist);
        for (&i, &d) in members.iter().zip(&dist) {
            if d < tau {
                bank.push(
                    n,
                    Prototype {
                        feature: features.row(i).to_vec(),
                        grain: Grain::TargetCoarse,
                        confidence: confidence[i],
                        sample: Some(i),
                    },
                )?;
            }
        }
    }
    Ok(bank)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Noise level relative to each input dimension's standard deviation.
    pub noise_sigma: f64,
    /// Probability of zeroing each coordinate.
    pub mask_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            mask_prob: 0.1,
        }
    }
}

/// Weak feature-space augmentation `x' = (x + ε) ⊙ m` with
/// `ε ~ N(0, (σ·stdⱼ)²)` per dimension and a Bernoulli keep-mask.
pub fn augment_features(inputs: &Tensor, rng: &mut Rng, cfg: &AugmentConfig) -> Result<Tensor> {
    if !(cfg.noise_sigma >= 0.0) || !(0.0..1.0).contains(&cfg.mask_prob) {
        return Err(Error::config(
            "adapt.augment",
            "noise_sigma must be ≥ 0 and mask_prob in [0, 1)",
        ));
    }
    let x = inputs.as_matrix();
    let (n, d) = (x.rows(), x.cols());
    let mut std = vec![0.0; d];
    if n > 0 {
        for j in 0..d {
            let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
            let v = (0..n).map(|i| { let d = x.get(i, j) - m; d * d }).sum::<f64>() / n as f64;
            std[j] = libm::sqrt(v);
        }
    }
    let mut out = x;
    for i in 0..n {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            if cfg.noise_sigma > 0.0 {
                *v += cfg.noise_sigma * std[j] * rng.normal();
            }
            if cfg.mask_prob > 0.0 && rng.bernoulli(cfg.mask_prob) {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineSelection {
    pub tau_c: f64,
    pub tau_u: f64,
    pub conf_avg: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub admitted: Vec<usize>,
}

/// Pair uncertainty: population standard deviation of two values.
pub fn pair_uncertainty(a: f64, b: f64) -> f64 {
    (a - b).abs() / 2.0
}

pub fn admit_fine(conf_avg: f64, uncertainty: f64, tau_c: f64, tau_u: f64) -> bool {
    conf_avg > tau_c && uncertainty < tau_u
}

/// Thresholds and admissions from per-sample confidences of the original
/// and augmented views.
pub fn fine_selection(conf: &[f64], conf_aug: &[f64]) -> Result<FineSelection> {
    if conf.len() != conf_aug.len() {
        return Err(Error::dim("confidence vectors differ in length"));
    }
    if conf.len() < 2 {
        return Err(Error::degenerate("fine prototypes need at least two samples"));
    }
    let conf_avg: Vec<f64> = conf.iter().zip(conf_aug).map(|(a, b)| (a + b) / 2.0).collect();
    let uncertainty: Vec<f64> = conf
        .iter()
        .zip(conf_aug)
        .map(|(&a, &b)| pair_uncertainty(a, b))
        .collect();
    let tau_c = mean(&conf_avg);
    let tau_u = mean(&uncertainty);
    let admitted = (0..conf.len())
        .filter(|&i| admit_fine(conf_avg[i], uncertainty[i], tau_c, tau_u))
        .collect();
    Ok(FineSelection {
        tau_c,
        tau_u,
        conf_avg,
        uncertainty,
        admitted,
    })
}

/// Max softmax probability over all classes, per row.
pub fn confidences(model: &ModelParams, inputs: &Tensor) -> Result<Vec<f64>> {
    let p = predict(model, inputs)?;
    Ok(p.row_iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .collect())
}

/// Fine prototypes: admitted samples become prototypes of their initial
/// pseudo-label with confidence `conf_avg`.
pub fn fine_prototypes(
    model: &ModelParams,
    inputs: &Tensor,
    augmented: &Tensor,
) -> Result<FineSelection> {
    let conf = confidences(model, inputs)?;
    let conf_aug = confidences(model, augmented)?;
    fine_selection(&conf, &conf_aug)
}

/// Trims every class to the smallest class's prototype count, keeping the
/// most confident entries (stable on ties).
pub fn balance_prototypes(bank: &PrototypeBank) -> Result<PrototypeBank> {
    if let Some(i) = bank.prototypes.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass {
            class: bank.classes[i],
        });
    }
    let p = bank.prototypes.iter().map(Vec::len).min().unwrap_or(0);
    let prototypes = bank
        .prototypes
        .iter()
        .map(|ps| {
            let mut order: Vec<usize> = (0..ps.len()).collect();
            order.sort_by(|&a, &b| {
                ps[b]
                    .confidence
                    .partial_cmp(&ps[a].confidence)
                    .unwrap_or(core::cmp::Ordering::Equal)
            });
            order.truncate(p);
            order.sort_unstable();
            order.into_iter().map(|i| ps[i].clone()).collect()
        })
        .collect();
    Ok(PrototypeBank {
        classes: bank.classes.clone(),
        prototypes,
    })
}

/// `ȳⱼ = argminₙ D(xⱼ, n)`, `D` the mean cosine distance to the class's
/// prototypes. Ties go to the lowest class index.
pub fn assign_pseudo_labels(features: &Tensor, bank: &PrototypeBank) -> Result<Vec<usize>> {
    if bank.classes.is_empty() {
        return Err(Error::degenerate("empty prototype bank"));
    }
    if let Some(i) = bank.prototypes.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass {
            class: bank.classes[i],
        });
    }
    // Mean cosine distance = 1 − x̂ · mean(ô).
    let mut mean_dirs = Vec::with_capacity(bank.classes.len());
    for ps in &bank.prototypes {
        let mut acc = vec![0.0; features.cols()];
        for p in ps {
            if p.feature.len() != acc.len() {
                return Err(Error::dim("prototype dimension differs from features"));
            }
            let n = norm(&p.feature);
            if n == 0.0 {
                return Err(Error::degenerate("zero-norm prototype"));
            }
            for (a, &f) in acc.iter_mut().zip(&p.feature) {
                *a += f / n;
            }
        }
        for a in &mut acc {
            *a /= ps.len() as f64;
        }
        mean_dirs.push(acc);
    }
    features
        .row_iter()
        .map(|x| {
            let n = norm(x);
            if n == 0.0 {
                return Err(Error::degenerate("zero-norm feature"));
            }
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, dir) in mean_dirs.iter().enumerate() {
                let d = 1.0 - crate::numerics::dot(x, dir) / n;
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            Ok(bank.classes[best])
        })
        .collect()
}

/// NT-Xent over `2B` views on a tape. Rows of `z` and `z_aug` with the same
/// index are positives; every other view of the batch is a negative.
pub fn tape_nt_xent(tape: &mut Tape, z: Var, z_aug: Var, temperature: f64) -> Result<Var> {
    let b = tape.value(z).rows();
    if b < 2 {
        return Err(Error::degenerate("contrastive loss needs a batch of at least two"));
    }
    if tape.value(z_aug).rows() != b {
        return Err(Error::dim("views differ in batch size"));
    }
    if !(temperature > 0.0) {
        return Err(Error::config("adapt.temperature", "must be positive"));
    }
    let views = tape.concat_rows(z, z_aug)?;
    let sim = tape.cosine_matrix(views, views)?;
    let logits = tape.scale(sim, 1.0 / temperature)?;
    let n = 2 * b;
    let mut targets = Tensor::zeros(&[n, n]);
    let mut mask = vec![true; n * n];
    for i in 0..n {
        mask[i * n + i] = false;
        targets.set(i, (i + b) % n, 1.0);
    }
    tape.softmax_cross_entropy(logits, targets, Some(&mask))
}

/// Value and gradients `(∂/∂z, ∂/∂z')` of the NT-Xent loss.
pub fn loss_con(z: &Tensor, z_aug: &Tensor, temperature: f64) -> Result<(f64, Tensor, Tensor)> {
    let (v, mut g) = value_and_grad(&[z.as_matrix(), z_aug.as_matrix()], |t, p| {
        tape_nt_xent(t, p[0], p[1], temperature)
    })?;
    let g_aug = g.pop().expect("two grads");
    let g_z = g.pop().expect("two grads");
    Ok((v, g_z, g_aug))
}

/// Mean cross-entropy of hard pseudo-labels over all `K` classes; value and
/// gradients in [`ModelParams::tensors`] order.
pub fn loss_ce(model: &ModelParams, inputs: &Tensor, labels: &[usize]) -> Result<(f64, Vec<Tensor>)> {
    if labels.is_empty() || labels.len() != inputs.rows() {
        return Err(Error::dim("one label per input row required"));
    }
    value_and_grad(&model.tensors(), |tape, p| {
        let vars = crate::model::split_vars(model, p);
        let x = tape.constant(inputs.as_matrix())?;
        let z = model.tape_features(tape, &vars, x)?;
        let logits = ModelParams::tape_logits(tape, &vars, z)?;
        tape_cross_entropy(tape, logits, labels, model.classes())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn linear_model(classifier: Tensor) -> ModelParams {
        let d = classifier.cols();
        ModelParams {
            layers: vec![Layer {
                weight: Tensor::identity(d),
                bias: Tensor::zeros(&[d]),
                relu: false,
            }],
            classifier,
        }
    }

    #[test]
    fn uniform_classifier_ties_to_lowest_positive() {
        let m = linear_model(Tensor::zeros(&[6, 2]));
        let x = Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.0, 0.3, 0.3]).unwrap();
        assert_eq!(initial_pseudo_labels(&m, &x, &[5, 2]).unwrap(), [2, 2, 2]);
    }

    #[test]
    fn aligned_feature_gets_its_class() {
        let mut c = Tensor::zeros(&[6, 3]);
        c.set(5, 0, 1.0);
        c.set(2, 1, 1.0);
        let m = linear_model(c);
        let x = Tensor::matrix(1, 3, vec![4.0, 0.0, 0.0]).unwrap();
        assert_eq!(initial_pseudo_labels(&m, &x, &[2, 5]).unwrap(), [5]);
    }

    #[test]
    fn masking_excludes_dominant_negative() {
        // row 0 (negative) dominates every input; restricted argmax differs
        let c = Tensor::matrix(3, 2, vec![10.0, 10.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = linear_model(c);
        let x = Tensor::matrix(2, 2, vec![1.0, 0.2, 0.1, 1.0]).unwrap();
        let logits = m.logits(&x).unwrap();
        let global: Vec<usize> = logits.row_iter().map(crate::numerics::argmax).collect();
        assert_eq!(global, [0, 0]);
        let positive = [1usize, 2];
        let oracle: Vec<usize> = logits
            .row_iter()
            .map(|r| if r[2] > r[1] { 2 } else { 1 })
            .collect();
        assert_eq!(initial_pseudo_labels(&m, &x, &positive).unwrap(), oracle);
        assert_eq!(oracle, [1, 2]);
    }

    fn source_rows() -> Tensor {
        Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn identical_features_admit_nothing() {
        let f = Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let bank =
            coarse_prototypes(&f, &[0, 0], &[0.9, 0.9], &source_rows(), &[1.0, 1.0], &[0]).unwrap();
        assert_eq!(bank.of(0).len(), 1);
        assert_eq!(bank.of(0)[0].grain, Grain::SourceCoarse);
    }

    #[test]
    fn coarse_threshold_example() {
        // centroid along +x; distances 1 − cos θ chosen as 0.1 and 0.3
        // symmetric about the x axis so the centroid direction is exact
        let ang = |d: f64| libm::acos(1.0 - d);
        let (a, b) = (ang(0.1), ang(0.3));
        let f = Tensor::matrix(
            4,
            2,
            vec![
                libm::cos(a),
                libm::sin(a),
                libm::cos(a),
                -libm::sin(a),
                libm::cos(b),
                libm::sin(b),
                libm::cos(b),
                -libm::sin(b),
            ],
        )
        .unwrap();
        let mut c = [0.0; 2];
        for r in f.row_iter() {
            c[0] += r[0] / 4.0;
            c[1] += r[1] / 4.0;
        }
        let d: Vec<f64> = f.row_iter().map(|r| cosine_distance(r, &c).unwrap()).collect();
        let tau = d.iter().sum::<f64>() / 4.0;
        assert!((tau - 0.2).abs() < 1e-12);
        let expect: Vec<usize> = (0..4).filter(|&i| d[i] < tau).collect();
        let bank = coarse_prototypes(&f, &[1; 4], &[0.5; 4], &source_rows(), &[1.0; 2], &[1])
            .unwrap();
        let got: Vec<usize> = bank.of(1).iter().filter_map(|p| p.sample).collect();
        assert_eq!(got, expect);
        assert_eq!(got, [0, 1]);
    }

    #[test]
    fn unlabeled_class_keeps_only_source_prototype() {
        let f = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.9, 0.1]).unwrap();
        let bank =
            coarse_prototypes(&f, &[0, 0], &[0.9, 0.9], &source_rows(), &[1.0, 0.7], &[0, 1])
                .unwrap();
        assert_eq!(bank.of(1).len(), 1);
        assert_eq!(bank.of(1)[0].feature, vec![0.0, 1.0]);
    }

    #[test]
    fn fine_threshold_example() {
        let sel = fine_selection(&[0.9, 0.6], &[0.88, 0.4]).unwrap();
        assert!((sel.tau_c - 0.695).abs() < 1e-12);
        assert!((sel.uncertainty[0] - 0.01).abs() < 1e-12);
        assert!((sel.uncertainty[1] - 0.1).abs() < 1e-12);
        assert!((sel.tau_u - 0.055).abs() < 1e-12);
        assert_eq!(sel.admitted, [0]);
    }

    #[test]
    fn fine_equal_pairs_admit_nothing() {
        let sel = fine_selection(&[0.9, 0.5, 0.7], &[0.9, 0.5, 0.7]).unwrap();
        assert!(sel.admitted.is_empty());
        let sel = fine_selection(&[1.0, 0.5, 0.5], &[1.0, 0.5, 0.5]).unwrap();
        assert_eq!(sel.tau_u, 0.0);
        assert!(sel.admitted.is_empty());
        assert!(fine_selection(&[0.5], &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn fine_admission_monotone_in_confidence(
            c in 0.0f64..1.0, u in 0.0f64..0.5, tc in 0.0f64..1.0, tu in 0.0f64..0.5, bump in 0.0f64..1.0
        ) {
            if admit_fine(c, u, tc, tu) {
                prop_assert!(admit_fine(c + bump, u, tc, tu));
            }
        }
    }

    fn proto(conf: f64, sample: usize) -> Prototype {
        Prototype {
            feature: vec![1.0, sample as f64],
            grain: Grain::Fine,
            confidence: conf,
            sample: Some(sample),
        }
    }

    #[test]
    fn balancing_trims_to_minimum() {
        let mut bank = PrototypeBank::new(&[0, 1, 2]);
        let mut s = 0;
        for (c, n) in [(0, 3), (1, 5), (2, 4)] {
            for _ in 0..n {
                bank.push(c, proto(0.1 * s as f64, s)).unwrap();
                s += 1;
            }
        }
        let b = balance_prototypes(&bank).unwrap();
        assert_eq!(b.counts(), [3, 3, 3]);
        let even = balance_prototypes(&b).unwrap();
        assert_eq!(even, b);
    }

    #[test]
    fn balancing_keeps_most_confident() {
        let confs = [0.3, 0.9, 0.1, 0.9, 0.5, 0.7];
        let mut bank = PrototypeBank::new(&[0, 1]);
        for (i, &c) in confs.iter().enumerate() {
            bank.push(0, proto(c, i)).unwrap();
        }
        bank.push(1, proto(0.2, 100)).unwrap();
        bank.push(1, proto(0.4, 101)).unwrap();
        bank.push(1, proto(0.6, 102)).unwrap();
        let b = balance_prototypes(&bank).unwrap();
        // independent oracle: stable sort by descending confidence, take 3
        let mut idx: Vec<usize> = (0..confs.len()).collect();
        idx.sort_by(|&a, &b| confs[b].partial_cmp(&confs[a]).unwrap());
        let mut top: Vec<usize> = idx[..3].to_vec();
        top.sort_unstable();
        let kept: Vec<usize> = b.of(0).iter().map(|p| p.sample.unwrap()).collect();
        assert_eq!(kept, top);
        assert_eq!(kept, [1, 3, 5]);
        assert!(balance_prototypes(&PrototypeBank::new(&[4])).is_err());
    }

    #[test]
    fn assignment_examples() {
        let mut bank = PrototypeBank::new(&[3, 7]);
        bank.push(3, Prototype { feature: vec![1.0, 0.0], grain: Grain::SourceCoarse, confidence: 1.0, sample: None }).unwrap();
        bank.push(7, Prototype { feature: vec![0.0, 1.0], grain: Grain::SourceCoarse, confidence: 1.0, sample: None }).unwrap();
        let x = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(assign_pseudo_labels(&x, &bank).unwrap(), [3, 7]);
    }

    #[test]
    fn assignment_matches_exhaustive_oracle() {
        let mut rng = Rng::new(17);
        let mut bank = PrototypeBank::new(&[0, 1, 2]);
        for c in 0..3 {
            for _ in 0..2 {
                bank.push(c, Prototype { feature: rng.normal_vec(4, 1.0), grain: Grain::Fine, confidence: 0.5, sample: None }).unwrap();
            }
        }
        let x = Tensor::matrix(50, 4, rng.normal_vec(200, 1.0)).unwrap();
        let got = assign_pseudo_labels(&x, &bank).unwrap();
        for (i, row) in x.row_iter().enumerate() {
            let d: Vec<f64> = (0..3)
                .map(|c| {
                    bank.of(c).iter().map(|p| cosine_distance(row, &p.feature).unwrap()).sum::<f64>() / 2.0
                })
                .collect();
            let mut best = 0;
            for c in 1..3 {
                if d[c] < d[best] {
                    best = c;
                }
            }
            assert_eq!(got[i], best);
        }
    }

    #[test]
    fn augmentation_identity_and_determinism() {
        let mut rng = Rng::new(2);
        let x = Tensor::matrix(5, 3, rng.normal_vec(15, 1.0)).unwrap();
        let none = AugmentConfig { noise_sigma: 0.0, mask_prob: 0.0 };
        assert_eq!(augment_features(&x, &mut Rng::new(1), &none).unwrap(), x);
        let cfg = AugmentConfig::default();
        assert_eq!(
            augment_features(&x, &mut Rng::new(9), &cfg).unwrap(),
            augment_features(&x, &mut Rng::new(9), &cfg).unwrap()
        );
    }

    #[test]
    fn mask_rate_is_binomial() {
        let x = Tensor::filled(&[1, 10_000], 1.0);
        let cfg = AugmentConfig { noise_sigma: 0.0, mask_prob: 0.5 };
        let a = augment_features(&x, &mut Rng::new(4), &cfg).unwrap();
        let zeros = a.data().iter().filter(|&&v| v == 0.0).count() as f64;
        // mean 5000, sd 50
        assert!((zeros - 5000.0).abs() <= 150.0, "{zeros}");
    }

    #[test]
    fn nt_xent_orthogonal_views() {
        let z = Tensor::matrix(2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let za = Tensor::matrix(2, 4, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let (v, _, _) = loss_con(&z, &za, 0.5).unwrap();
        assert!((v - libm::log(3.0)).abs() < 1e-10);
    }

    #[test]
    fn nt_xent_identical_positives() {
        let z = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (v, _, _) = loss_con(&z, &z, 1.0).unwrap();
        let e = core::f64::consts::E;
        assert!((v + libm::log(e / (e + 2.0))).abs() < 1e-10);
        assert!((v - 0.5514).abs() < 1e-4);
    }

    #[test]
    fn nt_xent_errors() {
        let one = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(loss_con(&one, &one, 0.5).is_err());
        let z = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(loss_con(&z, &z, 0.5), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn nt_xent_scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let mut rng = Rng::new(seed);
            let z = Tensor::matrix(4, 3, rng.normal_vec(12, 1.0)).unwrap();
            let za = Tensor::matrix(4, 3, rng.normal_vec(12, 1.0)).unwrap();
            let (a, _, _) = loss_con(&z, &za, 0.5).unwrap();
            let (b, _, _) = loss_con(&z.map(|v| v * scale), &za.map(|v| v * scale), 0.5).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ce_uniform_is_log_k() {
        let m = linear_model(Tensor::zeros(&[5, 3]));
        let x = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let (v, _) = loss_ce(&m, &x, &[0, 4]).unwrap();
        assert!((v - libm::log(5.0)).abs() < 1e-12);
    }

    #[test]
    fn ce_perfect_prediction_near_zero() {
        let m = linear_model(Tensor::identity(3).map(|v| v * 100.0));
        let x = Tensor::matrix(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let (v, _) = loss_ce(&m, &x, &[0]).unwrap();
        assert!(v >= 0.0 && v < 1e-12);
    }
}
