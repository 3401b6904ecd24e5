//! Oracles shared by the integration suites. Nothing here calls into the code
//! under test except to read and write parameter values.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::BTreeMap;

use dpm_core::model::{ModelConfig, ModelParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over whole vectors; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn flatten(m: &Array2<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

pub fn unflatten(v: &[f64], like: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_vec(like.raw_dim(), v.to_vec()).expect("same element count")
}

/// Every parameter value in canonical tensor order.
pub fn params_to_vec(p: &ModelParams) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

pub fn params_from_vec(p: &mut ModelParams, v: &[f64]) {
    let mut at = 0;
    for t in p.tensors_mut() {
        let n = t.data.len();
        t.data.copy_from_slice(&v[at..at + n]);
        at += n;
    }
    assert_eq!(at, v.len());
}

/// A small random model whose variance heads are also randomized, so their
/// gradients are exercised away from the zero initialization.
pub fn random_model(seed: u64, categories: &[(&str, usize)], dq_hidden: Vec<usize>) -> ModelParams {
    let cats: BTreeMap<String, usize> = categories.iter().map(|(k, a)| (k.to_string(), *a)).collect();
    let mut config = ModelConfig::new(4, cats);
    config.hidden = vec![5, 4];
    config.embed_dim = 3;
    config.dq_hidden = dq_hidden;
    let mut p = ModelParams::init(config, seed).unwrap();
    let mut r = rng(seed ^ 0xabcd);
    for t in p.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += 0.3 * r.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

/// Row-wise `-log softmax(logits)[label]`, computed independently with a
/// plain log-sum-exp.
pub fn reference_ce(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[l]
        })
        .collect()
}

/// Standard normal density.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[f(e1, e2)]` for independent standard normals by the trapezoid rule on
/// `[-8, 8]^2`; the integrand decays fast enough that the rule is spectrally
/// accurate.
pub fn gaussian_expectation_2d(f: impl Fn(f64, f64) -> f64, points: usize) -> f64 {
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / (points - 1) as f64;
    let w = |i: usize| if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for i in 0..points {
        let a = lo + i as f64 * h;
        let wa = w(i) * phi(a);
        for j in 0..points {
            let b = lo + j as f64 * h;
            total += wa * w(j) * phi(b) * f(a, b);
        }
    }
    total * h * h
}

/// True positive and false positive rates of `score >= t`, live = 1.
pub fn rates_at(scores: &[f64], labels: &[u8], t: f64) -> (f64, f64) {
    let live = labels.iter().filter(|&&c| c == 1).count() as f64;
    let spoof = labels.len() as f64 - live;
    let tp = scores.iter().zip(labels).filter(|(&s, &c)| c == 1 && s >= t).count() as f64;
    let fp = scores.iter().zip(labels).filter(|(&s, &c)| c == 0 && s >= t).count() as f64;
    (tp / live, fp / spoof)
}

/// Best TPR over every candidate threshold whose FPR is within `target`.
pub fn brute_force_tpr_at_fpr(scores: &[f64], labels: &[u8], target: f64) -> f64 {
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(f64::INFINITY);
    candidates
        .iter()
        .map(|&t| rates_at(scores, labels, t))
        .filter(|&(_, fpr)| fpr <= target)
        .map(|(tpr, _)| tpr)
        .fold(0.0, f64::max)
}

/// Probability that a random live score beats a random spoof score, ties
/// counted half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let live: Vec<f64> = scores.iter().zip(labels).filter(|(_, &c)| c == 1).map(|(&s, _)| s).collect();
    let spoof: Vec<f64> = scores.iter().zip(labels).filter(|(_, &c)| c == 0).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &l in &live {
        for &s in &spoof {
            if l > s {
                wins += 1.0;
            } else if l == s {
                wins += 0.5;
            }
        }
    }
    wins / (live.len() * spoof.len()) as f64
}

/// Random scores on a coarse grid so ties are common, with both classes present.
pub fn random_scored_instance(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = r.random_range(2..=1000);
    let levels = r.random_range(2..=200);
    let shift: f64 = r.random_range(0.0..0.3);
    let mut labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = labels
        .iter()
        .map(|&c| {
            let raw: f64 = r.random::<f64>() + if c == 1 { shift } else { 0.0 };
            (raw.min(1.0) * levels as f64).round() / levels as f64
        })
        .collect();
    (scores, labels)
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
