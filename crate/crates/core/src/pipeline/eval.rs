use alloc::vec::Vec;

use super::session::SessionLog;
use crate::error::{Error, Result};
use crate::model::{predict_labels, ModelParams};
use crate::numerics::Tensor;
use crate::scenario::{FeatureMatrix, Scenario};

/// Anything that maps input rows to hard class labels.
pub trait Labeler {
    fn labels(&self, inputs: &Tensor) -> Result<Vec<usize>>;
}

impl Labeler for ModelParams {
    fn labels(&self, inputs: &Tensor) -> Result<Vec<usize>> {
        predict_labels(self, inputs)
    }
}

fn hit_rate(labeler: &dyn Labeler, data: &FeatureMatrix) -> Result<f64> {
    let truth = data
        .labels()
        .ok_or_else(|| Error::dim("evaluation needs labeled data"))?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let pred = labeler.labels(data.values())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Full-K argmax accuracy over the held-out splits of sessions `1..=through`.
pub fn evaluate_final_accuracy(
    labeler: &dyn Labeler,
    scenario: &Scenario,
    through: usize,
) -> Result<f64> {
    if through == 0 {
        return Err(Error::dim("sessions are numbered from 1"));
    }
    hit_rate(labeler, &scenario.seen_test(through)?)
}

/// Accuracy restricted to test samples of `classes`, over the splits seen
/// through session `through`.
pub fn old_class_accuracy(
    labeler: &dyn Labeler,
    scenario: &Scenario,
    classes: &[usize],
    through: usize,
) -> Result<f64> {
    if through == 0 {
        return Err(Error::dim("sessions are numbered from 1"));
    }
    let seen = scenario.seen_test(through)?;
    let rows = seen.rows_of(classes);
    if rows.is_empty() {
        return Err(Error::degenerate("no test samples for the requested classes"));
    }
    hit_rate(labeler, &seen.select(&rows))
}

/// Accuracy of each seen class through session `through`, in class order.
pub fn per_class_accuracy(
    labeler: &dyn Labeler,
    scenario: &Scenario,
    through: usize,
) -> Result<Vec<(usize, f64)>> {
    let seen = scenario.seen_test(through)?;
    let truth = seen
        .labels()
        .ok_or_else(|| Error::dim("evaluation needs labeled data"))?;
    let mut classes: Vec<usize> = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| Ok((c, hit_rate(labeler, &seen.select(&seen.rows_of(&[c])))?)))
        .collect()
}

/// Session accuracies recorded by the run driver, in session order.
pub fn evaluate_session_accuracy(logs: &[SessionLog]) -> Vec<f64> {
    logs.iter().filter_map(|l| l.accuracy).collect()
}

/// `(PCD, TCD)` as fractions: the share of true classes that were mined and
/// the share of mined classes that are true. TCD is 0 for an empty mined set.
pub fn mined_metrics(mined: &[usize], truth: &[usize]) -> (f64, f64) {
    let both = mined.iter().filter(|c| truth.contains(c)).count() as f64;
    let pcd = if truth.is_empty() {
        0.0
    } else {
        both / truth.len() as f64
    };
    let tcd = if mined.is_empty() {
        0.0
    } else {
        both / mined.len() as f64
    };
    (pcd, tcd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scenario::{generate_scenario, ScenarioConfig};

    struct Oracle<'a>(&'a Scenario);

    impl Labeler for Oracle<'_> {
        fn labels(&self, inputs: &Tensor) -> Result<Vec<usize>> {
            let all = self.0.seen_test(self.0.target_test.len())?;
            let truth = all.labels().unwrap();
            Ok(inputs
                .row_iter()
                .map(|r| {
                    let i = all.values().row_iter().position(|a| a == r).unwrap();
                    truth[i]
                })
                .collect())
        }
    }

    struct Uniform(usize, core::cell::RefCell<Rng>);

    impl Labeler for Uniform {
        fn labels(&self, inputs: &Tensor) -> Result<Vec<usize>> {
            let mut rng = self.1.borrow_mut();
            Ok((0..inputs.rows()).map(|_| rng.below(self.0)).collect())
        }
    }

    #[test]
    fn mined_metric_examples() {
        let mined: Vec<usize> = (0..10).chain([12]).collect();
        let truth: Vec<usize> = (0..10).collect();
        let (pcd, tcd) = mined_metrics(&mined, &truth);
        assert_eq!(pcd, 1.0);
        assert!((tcd - 10.0 / 11.0).abs() < 1e-12);
        assert_eq!(mined_metrics(&truth, &truth), (1.0, 1.0));
        assert_eq!(mined_metrics(&[], &truth), (0.0, 0.0));
    }

    #[test]
    fn oracle_and_uniform_labelers() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let oracle = Oracle(&s);
        assert_eq!(evaluate_final_accuracy(&oracle, &s, 3).unwrap(), 1.0);
        assert_eq!(old_class_accuracy(&oracle, &s, &[0, 1], 3).unwrap(), 1.0);
        let all: Vec<usize> = (0..12).collect();
        assert_eq!(
            old_class_accuracy(&oracle, &s, &all, 3).unwrap(),
            evaluate_final_accuracy(&oracle, &s, 3).unwrap()
        );

        // 12 · 30 = 360 test rows; a 4-sigma binomial band around 1/12
        let uniform = Uniform(12, core::cell::RefCell::new(Rng::new(5)));
        let acc = evaluate_final_accuracy(&uniform, &s, 3).unwrap();
        let n = 360.0;
        let p = 1.0 / 12.0;
        let sd = libm::sqrt(p * (1.0 - p) / n);
        assert!((acc - p).abs() < 4.0 * sd, "{acc}");
        assert!(evaluate_final_accuracy(&uniform, &s, 0).is_err());
        assert_eq!(per_class_accuracy(&oracle, &s, 1).unwrap().len(), 4);
    }
}
