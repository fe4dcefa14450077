//! Positive-class mining.
//!
//! Two accumulation distributions over the `K` source classes are built from
//! the session's unlabeled target data:
//!
//! - `S`: mean row-softmax of the similarity matrix between target features
//!   (from the source extractor) and the stored source centroids;
//! - `P`: summed source-model class probabilities, min-max normalized.
//!
//! A class is positive when it strictly exceeds the mean of either
//! distribution. Taking the union lets one branch recover a class the other
//! one misses.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{extract_features, predict, SourceSnapshot};
use crate::numerics::{mean, minmax_normalize, softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub by_similarity: bool,
    pub by_probability: bool,
}

/// Which distributions take part in mining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MiningBranch {
    #[default]
    Both,
    SimilarityOnly,
    ProbabilityOnly,
}

/// Mined classes in ascending order with per-class confidence and
/// provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveClassSet {
    classes: Vec<usize>,
    confidence: Vec<f64>,
    provenance: Vec<Provenance>,
}

impl PositiveClassSet {
    /// Builds a set from parallel per-class records. Every class needs at
    /// least one provenance flag.
    pub fn new(mut entries: Vec<(usize, f64, Provenance)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        entries.dedup_by_key(|e| e.0);
        if entries
            .iter()
            .any(|e| !e.2.by_similarity && !e.2.by_probability)
        {
            return Err(Error::Invariant("positive class without provenance".into()));
        }
        Ok(Self {
            classes: entries.iter().map(|e| e.0).collect(),
            confidence: entries.iter().map(|e| e.1).collect(),
            provenance: entries.iter().map(|e| e.2).collect(),
        })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn confidence(&self) -> &[f64] {
        &self.confidence
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn contains(&self, class: usize) -> bool {
        self.classes.binary_search(&class).is_ok()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Position of `class` within [`Self::classes`].
    pub fn position(&self, class: usize) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }
}

/// `S`: for each target feature, softmax over its dot products with the
/// source centroids; averaged over samples.
pub fn similarity_distribution(features: &Tensor, centroids: &Tensor) -> Result<Vec<f64>> {
    if features.rows() == 0 {
        return Err(Error::dim("similarity distribution needs at least one sample"));
    }
    if features.cols() != centroids.cols() {
        return Err(Error::dim(alloc::format!(
            "features have dim {}, centroids {}",
            features.cols(),
            centroids.cols()
        )));
    }
    let r = features.matmul_t(centroids)?;
    let k = centroids.rows();
    let mut s = vec![0.0; k];
    for row in r.row_iter() {
        for (acc, p) in s.iter_mut().zip(softmax(row)?) {
            *acc += p;
        }
    }
    let n = features.rows() as f64;
    Ok(s.into_iter().map(|v| v / n).collect())
}

/// `P`: summed source-model probabilities per class, min-max normalized.
pub fn probability_distribution(snapshot: &SourceSnapshot, inputs: &Tensor) -> Result<Vec<f64>> {
    if inputs.rows() == 0 {
        return Err(Error::dim("probability distribution needs at least one sample"));
    }
    let probs = predict(snapshot.params(), inputs)?;
    let mut p = vec![0.0; probs.cols()];
    for row in probs.row_iter() {
        for (acc, &v) in p.iter_mut().zip(row) {
            *acc += v;
        }
    }
    minmax_normalize(&p)
}

/// Union of `{k : Sₖ > mean(S)}` and `{k : Pₖ > mean(P)}`.
pub fn mine_positive_classes(s: &[f64], p: &[f64]) -> Result<PositiveClassSet> {
    mine_with_branch(s, p, MiningBranch::Both)
}

pub fn mine_with_branch(s: &[f64], p: &[f64], branch: MiningBranch) -> Result<PositiveClassSet> {
    if s.len() != p.len() || s.is_empty() {
        return Err(Error::dim("S and P must be non-empty and of equal length"));
    }
    let (ts, tp) = (mean(s), mean(p));
    let s_norm = minmax_normalize(s)?;
    let use_s = branch != MiningBranch::ProbabilityOnly;
    let use_p = branch != MiningBranch::SimilarityOnly;
    let mut entries = Vec::new();
    for k in 0..s.len() {
        let prov = Provenance {
            by_similarity: use_s && s[k] > ts,
            by_probability: use_p && p[k] > tp,
        };
        if prov.by_similarity || prov.by_probability {
            let conf = match branch {
                MiningBranch::Both => s_norm[k].max(p[k]),
                MiningBranch::SimilarityOnly => s_norm[k],
                MiningBranch::ProbabilityOnly => p[k],
            };
            entries.push((k, conf, prov));
        }
    }
    if entries.is_empty() {
        return Err(Error::MiningFailure);
    }
    PositiveClassSet::new(entries)
}

/// Keeps the mined classes that received at least one pseudo-label. An
/// empty label list leaves the set unchanged.
pub fn refine_positive_set(set: &PositiveClassSet, labels: &[usize]) -> PositiveClassSet {
    if labels.is_empty() {
        return set.clone();
    }
    let keep: Vec<bool> = set.classes.iter().map(|c| labels.contains(c)).collect();
    let pick = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&x, _)| x)
            .collect()
    };
    PositiveClassSet {
        classes: set
            .classes
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&c, _)| c)
            .collect(),
        confidence: pick(&set.confidence),
        provenance: set
            .provenance
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&p, _)| p)
            .collect(),
    }
}

/// Everything the mining step saw, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningReport {
    pub similarity: Vec<f64>,
    pub probability: Vec<f64>,
    pub similarity_threshold: f64,
    pub probability_threshold: f64,
    pub branch: MiningBranch,
    pub positive: PositiveClassSet,
}

/// Runs both distributions with the frozen source model and mines the set.
pub fn mine_session(
    snapshot: &SourceSnapshot,
    inputs: &Tensor,
    branch: MiningBranch,
) -> Result<MiningReport> {
    let g = extract_features(snapshot.params(), inputs)?;
    let s = similarity_distribution(&g, snapshot.centroids())?;
    let p = probability_distribution(snapshot, inputs)?;
    let positive = mine_with_branch(&s, &p, branch)?;
    Ok(MiningReport {
        similarity_threshold: mean(&s),
        probability_threshold: mean(&p),
        similarity: s,
        probability: p,
        branch,
        positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_example() {
        let set = mine_positive_classes(&[0.6, 0.25, 0.15], &[1.0, 0.0, 0.4]).unwrap();
        assert_eq!(set.classes(), &[0]);
        assert!(set.provenance()[0].by_similarity && set.provenance()[0].by_probability);
    }

    #[test]
    fn probability_branch_alone() {
        let s = [0.25; 4];
        let p = [1.0, 0.0, 0.0, 0.0];
        let set = mine_positive_classes(&s, &p).unwrap();
        assert_eq!(set.classes(), &[0]);
        assert!(!set.provenance()[0].by_similarity);
        assert!(set.provenance()[0].by_probability);
    }

    #[test]
    fn union_of_disagreeing_branches() {
        let s = [0.4, 0.4, 0.1, 0.1];
        let p = [0.0, 1.0, 1.0, 0.0];
        let set = mine_positive_classes(&s, &p).unwrap();
        assert_eq!(set.classes(), &[0, 1, 2]);
    }

    #[test]
    fn no_evidence_is_a_failure() {
        assert_eq!(
            mine_positive_classes(&[0.5, 0.5], &[0.0, 0.0]),
            Err(Error::MiningFailure)
        );
    }

    #[test]
    fn similarity_saturates_on_orthonormal_centroids() {
        let c = Tensor::identity(3);
        let g = Tensor::matrix(1, 3, vec![10.0, 0.0, 0.0]).unwrap();
        let s = similarity_distribution(&g, &c).unwrap();
        assert!(s[0] > 0.9999);
        let same = Tensor::matrix(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let s = similarity_distribution(&Tensor::matrix(1, 2, vec![0.3, -1.0]).unwrap(), &same)
            .unwrap();
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn similarity_matches_direct_computation() {
        let g = Tensor::matrix(2, 2, vec![1.0, 0.5, -0.2, 0.8]).unwrap();
        let c = Tensor::matrix(3, 2, vec![0.3, 0.1, -0.4, 0.9, 1.0, -1.0]).unwrap();
        let s = similarity_distribution(&g, &c).unwrap();
        let mut expect = [0.0; 3];
        for i in 0..2 {
            let r: Vec<f64> = (0..3)
                .map(|k| g.get(i, 0) * c.get(k, 0) + g.get(i, 1) * c.get(k, 1))
                .collect();
            let z: f64 = r.iter().map(|v| libm::exp(*v)).sum();
            for k in 0..3 {
                expect[k] += libm::exp(r[k]) / z / 2.0;
            }
        }
        for k in 0..3 {
            assert!((s[k] - expect[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn refinement_examples() {
        let prov = Provenance {
            by_similarity: true,
            by_probability: false,
        };
        let set = PositiveClassSet::new(vec![(0, 1.0, prov), (1, 0.9, prov), (2, 0.8, prov)])
            .unwrap();
        assert_eq!(refine_positive_set(&set, &[0, 1, 1, 0]).classes(), &[0, 1]);
        assert_eq!(refine_positive_set(&set, &[2, 1, 0]), set);
        assert_eq!(refine_positive_set(&set, &[]), set);
    }

    #[test]
    fn disabled_branch_leaves_no_flag() {
        let s = [0.4, 0.4, 0.1, 0.1];
        let p = [0.0, 1.0, 1.0, 0.0];
        let set = mine_with_branch(&s, &p, MiningBranch::SimilarityOnly).unwrap();
        assert_eq!(set.classes(), &[0, 1]);
        assert!(set.provenance().iter().all(|p| !p.by_probability));
    }

    fn dist(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, k)
    }

    proptest! {
        #[test]
        fn union_contains_each_branch((s, p) in (2usize..10).prop_flat_map(|k| (dist(k), dist(k)))) {
            if let Ok(both) = mine_positive_classes(&s, &p) {
                for br in [MiningBranch::SimilarityOnly, MiningBranch::ProbabilityOnly] {
                    if let Ok(one) = mine_with_branch(&s, &p, br) {
                        for c in one.classes() {
                            prop_assert!(both.contains(*c));
                        }
                    }
                }
            }
        }

        #[test]
        fn permutation_equivariance(
            (s, p, perm) in (2usize..10).prop_flat_map(|k| (dist(k), dist(k), Just((0..k).collect::<Vec<_>>()).prop_shuffle()))
        ) {
            let ps: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            match (mine_positive_classes(&s, &p), mine_positive_classes(&ps, &pp)) {
                (Ok(a), Ok(b)) => {
                    let mut mapped: Vec<usize> = b.classes().iter().map(|&j| perm[j]).collect();
                    mapped.sort_unstable();
                    prop_assert_eq!(a.classes(), mapped.as_slice());
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "mining outcome changed under permutation"),
            }
        }
    }
}
