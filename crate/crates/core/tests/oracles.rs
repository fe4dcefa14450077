//! Library results against direct reimplementations.

use groto_core::mining::mine_positive_classes;
use groto_core::numerics::Tensor;
use groto_core::replay::select_exemplars;
use groto_core::rng::Rng;
use groto_core::topodistill::{loss_com, loss_sep, TopologyPair};

fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    1.0 - ab / (aa.sqrt() * bb.sqrt())
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compactness by direct double summation.
fn com_oracle(mu: &[Vec<f64>], f: &[Vec<f64>], p: &[f64]) -> f64 {
    let n = mu.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut denom = 0.0;
        for i in 0..n {
            denom += p[i] * dotp(&mu[i], &f[j]).exp();
        }
        for i in 0..n {
            total += cos_dist(&mu[i], &f[j]) * p[i] * dotp(&mu[i], &f[j]).exp() / denom;
        }
    }
    total / n as f64
}

/// Separability by direct double summation.
fn sep_oracle(mu: &[Vec<f64>], f: &[Vec<f64>], p: &[f64]) -> f64 {
    let n = mu.len();
    let mut total = 0.0;
    for i in 0..n {
        let denom: f64 = (0..n).map(|j| dotp(&mu[i], &f[j]).exp()).sum();
        let mut inner = 0.0;
        for j in 0..n {
            inner += cos_dist(&mu[i], &f[j]) * dotp(&mu[i], &f[j]).exp() / denom;
        }
        total += p[i] * inner;
    }
    total
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.row_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn distillation_terms_match_double_sums() {
    for n in 1..=5 {
        for seed in 0..20 {
            let mut rng = Rng::new(1000 * n as u64 + seed);
            let mu = Tensor::matrix(n, 4, rng.normal_vec(n * 4, 1.0)).unwrap();
            let f = Tensor::matrix(n, 4, rng.normal_vec(n * 4, 1.0)).unwrap();
            let raw: Vec<f64> = (0..n).map(|_| rng.uniform() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let rest: f64 = p[1..].iter().sum();
            p[0] = 1.0 - rest;
            let pair = TopologyPair::new(mu.clone(), f.clone(), p.clone()).unwrap();
            let com = loss_com(&pair).unwrap().value;
            let sep = loss_sep(&pair).unwrap().value;
            assert!((com - com_oracle(&rows(&mu), &rows(&f), &p)).abs() < 1e-10);
            assert!((sep - sep_oracle(&rows(&mu), &rows(&f), &p)).abs() < 1e-10);
        }
    }
}

/// Greedy herding written from the definition: at each round try every
/// remaining sample and keep the one whose inclusion gives the exemplar
/// mean nearest the class mean.
fn herding_oracle(x: &[Vec<f64>], m: usize) -> Vec<usize> {
    let d = x[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|k| x.iter().map(|r| r[k]).sum::<f64>() / x.len() as f64)
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < m.min(x.len()) {
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..x.len() {
            if chosen.contains(&cand) {
                continue;
            }
            let mut set = chosen.clone();
            set.push(cand);
            let dist: f64 = (0..d)
                .map(|k| {
                    let avg = set.iter().map(|&i| x[i][k]).sum::<f64>() / set.len() as f64;
                    (mean[k] - avg).powi(2)
                })
                .sum();
            if best.is_none_or(|(b, _)| dist < b) {
                best = Some((dist, cand));
            }
        }
        chosen.push(best.unwrap().1);
    }
    chosen
}

#[test]
fn herding_matches_greedy_oracle() {
    let mut rng = Rng::new(77);
    for _ in 0..100 {
        let f = Tensor::matrix(20, 6, rng.normal_vec(120, 1.0)).unwrap();
        assert_eq!(select_exemplars(&f, 5).unwrap(), herding_oracle(&rows(&f), 5));
    }
}

#[test]
fn similarity_branch_repairs_a_probability_omission() {
    // true classes {0, 1, 2, 3, 4}; the probability branch misses class 4
    let s = [0.17, 0.16, 0.18, 0.15, 0.14, 0.03, 0.03, 0.04, 0.05, 0.05];
    let p = [1.0, 0.9, 0.95, 0.8, 0.2, 0.0, 0.02, 0.05, 0.01, 0.03];
    let pm = p.iter().sum::<f64>() / p.len() as f64;
    assert!(p[4] <= pm, "class 4 must be missed by the probability branch");
    let set = mine_positive_classes(&s, &p).unwrap();
    assert_eq!(set.classes(), &[0, 1, 2, 3, 4]);
    let prov = set.provenance()[4];
    assert!(prov.by_similarity && !prov.by_probability);
}
