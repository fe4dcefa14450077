use alloc::vec::Vec;

use super::tensor::{dot, norm};
use crate::error::{Error, Result};

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::dim("softmax of empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::degenerate("softmax of non-finite input"));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| libm::exp(x - m)).collect();
    let z: f64 = out.iter().sum();
    for o in &mut out {
        *o /= z;
    }
    out
}

/// Numerically stable `log Σ exp(v)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + libm::log(v.iter().map(|&x| libm::exp(x - m)).sum::<f64>())
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(alloc::format!(
            "cosine between lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::degenerate("cosine of zero-norm vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine_similarity(a, b).map(|c| 1.0 - c)
}

/// Rescales to `[0, 1]`. A flat vector maps to all zeros.
pub fn minmax_normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::dim("min-max normalization of empty vector"));
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span == 0.0 {
        return Ok(alloc::vec![0.0; v.len()]);
    }
    Ok(v.iter().map(|&x| (x - lo) / span).collect())
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::degenerate("l2 normalization of zero vector"));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        let third = 1.0 / 3.0;
        assert!(close(&softmax(&[0.0, 0.0, 0.0]).unwrap(), &[third; 3], 1e-15));
        assert!(close(
            &softmax(&[0.0, core::f64::consts::LN_2]).unwrap(),
            &[third, 2.0 * third],
            1e-15
        ));
        assert!(close(&softmax(&[1000.0, 1000.0]).unwrap(), &[0.5, 0.5], 0.0));
        assert!(matches!(softmax(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn cosine_distance_examples() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[1.0, 2.0, 3.0]).unwrap(), [0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[5.0, 5.0, 5.0]).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(minmax_normalize(&[-1.0, 0.0, 3.0]).unwrap(), [0.0, 0.25, 1.0]);
        assert!(minmax_normalize(&[]).is_err());
    }

    #[test]
    fn l2_examples() {
        assert!(close(&l2_normalize(&[3.0, 4.0]).unwrap(), &[0.6, 0.8], 1e-15));
        assert_eq!(l2_normalize(&[1.0, 0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0]);
        let h = core::f64::consts::SQRT_2 / 2.0;
        assert!(close(&l2_normalize(&[2.0, 2.0]).unwrap(), &[h, h], 1e-15));
        assert!(l2_normalize(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
