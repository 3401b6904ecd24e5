use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, SPOOF_TYPE};
use crate::error::{DpmError, Result};

pub const DEFAULT_SMOOTHING_WINDOW: usize = 3;

// Separate ChaCha streams so two injectors called with the same seed pick
// independent subsets.
const SEMANTIC_STREAM: u64 = 1;
const BINARY_STREAM: u64 = 2;
const DATA_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub semantic_noise_fraction: f64,
    pub binary_label_flip_fraction: f64,
    pub data_noise_fraction: f64,
    pub data_noise_severity: f64,
    pub cluster_overlap: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            semantic_noise_fraction: 0.0,
            binary_label_flip_fraction: 0.0,
            data_noise_fraction: 0.0,
            data_noise_severity: 0.0,
            cluster_overlap: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        check_fraction(self.semantic_noise_fraction)?;
        check_fraction(self.binary_label_flip_fraction)?;
        check_fraction(self.data_noise_fraction)?;
        check_non_negative("data_noise_severity", self.data_noise_severity)?;
        check_non_negative("cluster_overlap", self.cluster_overlap)
    }

    /// Applies semantic, binary and data noise in that order, each on its own
    /// seed stream.
    pub fn apply(&self, ds: &Dataset, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let ds = inject_semantic_label_noise(ds, self.semantic_noise_fraction, seed)?;
        let ds = inject_binary_label_noise(&ds, self.binary_label_flip_fraction, seed)?;
        inject_data_noise(
            &ds,
            self.data_noise_fraction,
            self.data_noise_severity,
            seed,
        )
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(DpmError::Config(format!("noise fraction {f} not in [0, 1]")))
    }
}

fn check_non_negative(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(DpmError::Config(format!("{what} must be finite and >= 0, got {v}")))
    }
}

/// `round(fraction * n)` with halves rounded up.
fn noisy_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).min(n)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Picks `round(fraction * eligible.len())` positions out of `eligible`, sorted.
fn choose(rng: &mut ChaCha8Rng, eligible: &[usize], fraction: f64) -> Vec<usize> {
    let k = noisy_count(fraction, eligible.len());
    let mut picked: Vec<usize> = index::sample(rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Re-draws the spoof-type label of `round(fraction * N_spoof)` spoof samples
/// uniformly over all spoof types (the original label may be drawn again).
pub fn inject_semantic_label_noise(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    check_fraction(fraction)?;
    let mut out = ds.clone();
    let Some(&card) = ds.categories.get(SPOOF_TYPE) else {
        return Ok(out);
    };
    let eligible: Vec<usize> = ds
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.s.contains_key(SPOOF_TYPE))
        .map(|(i, _)| i)
        .collect();
    let mut rng = stream(seed, SEMANTIC_STREAM);
    for i in choose(&mut rng, &eligible, fraction) {
        let sample = &mut out.samples[i];
        sample
            .s
            .insert(SPOOF_TYPE.to_string(), rng.random_range(0..card));
        sample.noise.semantic_reassigned = true;
    }
    Ok(out)
}

/// Flips the live/spoof label of `round(fraction * N)` samples.
pub fn inject_binary_label_noise(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    check_fraction(fraction)?;
    let mut out = ds.clone();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut rng = stream(seed, BINARY_STREAM);
    for i in choose(&mut rng, &all, fraction) {
        let sample = &mut out.samples[i];
        sample.c = 1 - sample.c;
        sample.noise.label_flipped = !sample.noise.label_flipped;
    }
    Ok(out)
}

/// Degrades `round(fraction * N)` feature vectors with a moving-average blur
/// (window 3) followed by additive Gaussian noise of standard deviation `severity`.
pub fn inject_data_noise(
    ds: &Dataset,
    fraction: f64,
    severity: f64,
    seed: u64,
) -> Result<Dataset> {
    inject_data_noise_with_window(ds, fraction, severity, DEFAULT_SMOOTHING_WINDOW, seed)
}

pub fn inject_data_noise_with_window(
    ds: &Dataset,
    fraction: f64,
    severity: f64,
    window: usize,
    seed: u64,
) -> Result<Dataset> {
    check_fraction(fraction)?;
    check_non_negative("severity", severity)?;
    if window == 0 {
        return Err(DpmError::Config("smoothing window must be >= 1".into()));
    }
    let mut out = ds.clone();
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut rng = stream(seed, DATA_STREAM);
    for i in choose(&mut rng, &all, fraction) {
        let sample = &mut out.samples[i];
        let mut x = smooth(&sample.x, window);
        if severity > 0.0 {
            for v in x.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *v += severity * e;
            }
        }
        sample.x = x;
        sample.noise.data_corrupted = true;
        sample.noise.corruption_severity = sample.noise.corruption_severity.hypot(severity);
    }
    Ok(out)
}

/// Truncated moving average over neighbouring feature coordinates.
fn smooth(x: &[f64], window: usize) -> Vec<f64> {
    if window == 1 {
        return x.to_vec();
    }
    let before = (window - 1) / 2;
    let after = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(x.len() - 1);
            x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}
