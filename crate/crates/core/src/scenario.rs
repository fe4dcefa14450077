//! Synthetic class-incremental scenarios.
//!
//! A scenario is a labeled source domain over `K` classes plus a sequence of
//! target sessions. Each session covers a disjoint block of `γ` classes drawn
//! from a shifted version of the source distribution; classes left over after
//! the last full block exist only in the source domain.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{norm, Tensor};
use crate::rng::Rng;

/// Rows of feature vectors with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Tensor,
    labels: Option<Vec<usize>>,
}

impl FeatureMatrix {
    pub fn new(values: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        let values = values.as_matrix();
        if let Some(l) = &labels {
            if l.len() != values.rows() {
                return Err(Error::dim(alloc::format!(
                    "{} labels for {} rows",
                    l.len(),
                    values.rows()
                )));
            }
        }
        Ok(Self { values, labels })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Indices of rows carrying any of `classes`.
    pub fn rows_of(&self, classes: &[usize]) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| classes.contains(&l[i])).collect(),
            None => Vec::new(),
        }
    }

    /// Concatenates matrices with equal dimension. Labels survive only when
    /// every part carries them.
    pub fn concat(parts: &[&FeatureMatrix]) -> Result<Self> {
        let dim = parts.first().map_or(0, |p| p.dim());
        let mut data = Vec::new();
        let mut labels = Some(Vec::new());
        let mut rows = 0;
        for p in parts {
            if p.dim() != dim {
                return Err(Error::dim("concatenating feature matrices of different dims"));
            }
            data.extend_from_slice(p.values.data());
            rows += p.rows();
            match (&mut labels, &p.labels) {
                (Some(acc), Some(l)) => acc.extend_from_slice(l),
                _ => labels = None,
            }
        }
        Self::new(Tensor::matrix(rows, dim, data)?, labels)
    }

    /// Rounds every value to single precision, matching what a round trip
    /// through an on-disk feature file yields.
    pub fn quantize_f32(&mut self) {
        for v in self.values.data_mut() {
            *v = *v as f32 as f64;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionOrder {
    Index,
    Random { seed: u64 },
}

/// Splits `classes` into consecutive blocks of `block` classes in the chosen
/// order. A trailing partial block is dropped.
pub fn partition_sessions(
    classes: &[usize],
    block: usize,
    order: SessionOrder,
) -> Result<Vec<Vec<usize>>> {
    let mut pool: Vec<usize> = classes.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if block == 0 {
        return Err(Error::config("scenario.session_classes", "must be at least 1"));
    }
    if block > pool.len() {
        return Err(Error::config(
            "scenario.session_classes",
            alloc::format!("{} exceeds the {} available classes", block, pool.len()),
        ));
    }
    if let SessionOrder::Random { seed } = order {
        Rng::new(seed).shuffle(&mut pool);
    }
    Ok(pool.chunks_exact(block).map(|c| c.to_vec()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Total number of source classes `K`.
    pub classes: usize,
    /// Classes per target session `γ`.
    pub session_classes: usize,
    pub sessions: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    pub domain_shift: f64,
    /// Fraction of each class held out for evaluation.
    pub test_fraction: f64,
    pub order: SessionOrder,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            classes: 12,
            session_classes: 4,
            sessions: 3,
            input_dim: 64,
            samples_per_class: 150,
            cluster_spread: 1.0,
            domain_shift: 0.4,
            test_fraction: 0.2,
            order: SessionOrder::Index,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.session_classes == 0 {
            return Err(Error::config("scenario.session_classes", "must be at least 1"));
        }
        if self.sessions == 0 {
            return Err(Error::config("scenario.sessions", "must be at least 1"));
        }
        if self.classes < self.session_classes * self.sessions {
            return Err(Error::config(
                "scenario.classes",
                alloc::format!(
                    "{} classes cannot hold {} sessions of {}",
                    self.classes,
                    self.sessions,
                    self.session_classes
                ),
            ));
        }
        if self.input_dim == 0 {
            return Err(Error::config("scenario.input_dim", "must be at least 1"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::config("scenario.samples_per_class", "must be at least 2"));
        }
        if !(self.cluster_spread > 0.0) || !self.cluster_spread.is_finite() {
            return Err(Error::config("scenario.cluster_spread", "must be positive"));
        }
        if !(self.domain_shift > 0.0) || !self.domain_shift.is_finite() {
            return Err(Error::config("scenario.domain_shift", "must be positive"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("scenario.test_fraction", "must lie in (0, 1)"));
        }
        let (train, test) = self.split_sizes();
        if train == 0 || test == 0 {
            return Err(Error::config(
                "scenario.test_fraction",
                "leaves an empty train or test split",
            ));
        }
        Ok(())
    }

    fn split_sizes(&self) -> (usize, usize) {
        let test = libm::round(self.samples_per_class as f64 * self.test_fraction) as usize;
        (self.samples_per_class.saturating_sub(test), test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionDataset {
    /// 1-based.
    pub session_index: usize,
    /// Training inputs. Labels are carried for diagnostics only.
    pub inputs: FeatureMatrix,
    pub class_subset: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub classes: usize,
    pub input_dim: usize,
    pub source_train: FeatureMatrix,
    pub source_test: FeatureMatrix,
    pub target_sessions: Vec<SessionDataset>,
    /// Held-out labeled target data, one entry per session.
    pub target_test: Vec<FeatureMatrix>,
    pub seed: u64,
}

impl Scenario {
    /// Classes present in the source domain but in no target session.
    pub fn negative_classes(&self) -> Vec<usize> {
        (0..self.classes)
            .filter(|c| !self.target_sessions.iter().any(|s| s.class_subset.contains(c)))
            .collect()
    }

    /// Concatenated held-out data of sessions `1..=through`.
    pub fn seen_test(&self, through: usize) -> Result<FeatureMatrix> {
        let n = through.min(self.target_test.len());
        let parts: Vec<&FeatureMatrix> = self.target_test[..n].iter().collect();
        FeatureMatrix::concat(&parts)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![false; self.classes];
        for s in &self.target_sessions {
            if s.class_subset.len() >= self.classes {
                return Err(Error::Invariant(alloc::format!(
                    "session {} covers every source class",
                    s.session_index
                )));
            }
            if s.inputs.is_empty() {
                return Err(Error::Invariant(alloc::format!(
                    "session {} has no inputs",
                    s.session_index
                )));
            }
            for &c in &s.class_subset {
                if c >= self.classes || seen[c] {
                    return Err(Error::Invariant(alloc::format!(
                        "class {c} repeated or out of range in session {}",
                        s.session_index
                    )));
                }
                seen[c] = true;
            }
            if let Some(l) = s.inputs.labels() {
                if l.iter().any(|c| !s.class_subset.contains(c)) {
                    return Err(Error::Invariant(alloc::format!(
                        "session {} holds a label outside its class subset",
                        s.session_index
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn quantize_f32(&mut self) {
        self.source_train.quantize_f32();
        self.source_test.quantize_f32();
        for s in &mut self.target_sessions {
            s.inputs.quantize_f32();
        }
        for t in &mut self.target_test {
            t.quantize_f32();
        }
    }
}

/// Random unit directions scaled so that the closest pair of class means is
/// `2 · margin · spread` apart, i.e. every mean sits at least
/// `margin · spread` from the bisecting boundary of its nearest neighbour.
fn class_means(rng: &mut Rng, k: usize, dim: usize, spread: f64, margin: f64) -> Vec<Vec<f64>> {
    let units: Vec<Vec<f64>> = (0..k)
        .map(|_| loop {
            let v = rng.normal_vec(dim, 1.0);
            let n = norm(&v);
            if n > 1e-9 {
                break v.iter().map(|x| x / n).collect();
            }
        })
        .collect();
    let mut min_dist = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            let d: Vec<f64> = units[i].iter().zip(&units[j]).map(|(a, b)| a - b).collect();
            min_dist = min_dist.min(norm(&d));
        }
    }
    if !min_dist.is_finite() || min_dist < 1e-9 {
        min_dist = 1.0;
    }
    let radius = 2.0 * margin * spread / min_dist;
    units
        .into_iter()
        .map(|u| u.into_iter().map(|x| x * radius).collect())
        .collect()
}

/// Half-distance between the closest pair of class means, in units of the
/// cluster spread.
pub const MEAN_MARGIN: f64 = 4.5;

/// Draws a scenario. Pure function of `cfg`.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let d = cfg.input_dim;
    let sigma = cfg.cluster_spread;
    let means = class_means(&mut rng, cfg.classes, d, sigma, MEAN_MARGIN);
    let radius = norm(&means[0]);

    // Target map x ↦ A x + b with A = I + s·G/√d.
    let s = cfg.domain_shift;
    let scale = s / libm::sqrt(d as f64);
    let mut shift_matrix = Tensor::identity(d);
    for v in shift_matrix.data_mut() {
        *v += scale * rng.normal();
    }
    let offset: Vec<f64> = rng.normal_vec(d, scale * radius);

    let (n_train, n_test) = cfg.split_sizes();
    let n = n_train + n_test;

    let mut src_train = (Vec::new(), Vec::new());
    let mut src_test = (Vec::new(), Vec::new());
    for (k, mean) in means.iter().enumerate() {
        for i in 0..n {
            let x: Vec<f64> = mean.iter().map(|m| m + sigma * rng.normal()).collect();
            let dst = if i < n_train { &mut src_train } else { &mut src_test };
            dst.0.extend(x);
            dst.1.push(k);
        }
    }
    let to_matrix = |(data, labels): (Vec<f64>, Vec<usize>)| -> Result<FeatureMatrix> {
        FeatureMatrix::new(Tensor::matrix(labels.len(), d, data)?, Some(labels))
    };

    let all: Vec<usize> = (0..cfg.classes).collect();
    let blocks = partition_sessions(&all, cfg.session_classes, cfg.order)?;
    let mut sessions = Vec::with_capacity(cfg.sessions);
    let mut tests = Vec::with_capacity(cfg.sessions);
    for (t, block) in blocks.into_iter().take(cfg.sessions).enumerate() {
        let mut train = (Vec::new(), Vec::new());
        let mut test = (Vec::new(), Vec::new());
        for &k in &block {
            for i in 0..n {
                let x: Vec<f64> = means[k].iter().map(|m| m + sigma * rng.normal()).collect();
                let mut y = vec![0.0; d];
                for (r, yr) in y.iter_mut().enumerate() {
                    let row = shift_matrix.row(r);
                    *yr = row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                        + offset[r]
                        + s * sigma * rng.normal();
                }
                let dst = if i < n_train { &mut train } else { &mut test };
                dst.0.extend(y);
                dst.1.push(k);
            }
        }
        sessions.push(SessionDataset {
            session_index: t + 1,
            inputs: to_matrix(train)?,
            class_subset: block,
        });
        tests.push(to_matrix(test)?);
    }

    let scenario = Scenario {
        classes: cfg.classes,
        input_dim: d,
        source_train: to_matrix(src_train)?,
        source_test: to_matrix(src_test)?,
        target_sessions: sessions,
        target_test: tests,
        seed: cfg.seed,
    };
    scenario.check_invariants()?;
    Ok(scenario)
}
