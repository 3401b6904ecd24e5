//! Desk-scale benchmark, four-arm ablation and noise sweeps.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    inject_binary_label_noise, inject_data_noise, inject_semantic_label_noise, Dataset, SyntheticSpec,
    SPOOF_TYPE,
};
use crate::error::{DpmError, Result};
use crate::inference::{live_scores, predict_batch};
use crate::losses::Batch;
use crate::metrics::{evaluate, EvalReport, DEFAULT_FPR_TARGETS, DEFAULT_THRESHOLD};
use crate::model::ModelParams;
use crate::training::{train_full_dpm, TrainConfig, TrainLog};

/// Ablation arms, from plain live/spoof training to the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    Baseline,
    S,
    SLq,
    SLqDq,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Baseline, Arm::S, Arm::SLq, Arm::SLqDq];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::S => "s",
            Arm::SLq => "s-lq",
            Arm::SLqDq => "s-lq-dq",
        }
    }

    /// Sets the three enable bits of `config` for this arm.
    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        let mut c = config.clone();
        let (semantic, lq, dq) = match self {
            Arm::Baseline => (false, false, false),
            Arm::S => (true, false, false),
            Arm::SLq => (true, true, false),
            Arm::SLqDq => (true, true, true),
        };
        c.enable_semantic = semantic;
        c.enable_lq = lq;
        c.enable_dq = dq;
        c
    }

    /// Arms with the data-quality head evaluate with corrected confidences.
    pub fn corrected(self) -> bool {
        self == Arm::SLqDq
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = DpmError;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| DpmError::Config(format!("unknown arm {s:?}; expected baseline, s, s-lq or s-lq-dq")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NoiseKind {
    Semantic,
    Binary,
    Data,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Semantic, NoiseKind::Binary, NoiseKind::Data];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Semantic => "semantic",
            NoiseKind::Binary => "binary",
            NoiseKind::Data => "data",
        }
    }

    /// Sweep grid used when no fractions are given.
    pub fn default_fractions(self) -> &'static [f64] {
        match self {
            NoiseKind::Semantic | NoiseKind::Binary => &[0.0, 0.2, 0.5, 0.7, 1.0],
            NoiseKind::Data => &[0.0, 0.1, 0.2, 0.3, 0.5],
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = DpmError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DpmError::Config(format!("unknown noise kind {s:?}; expected semantic, binary or data")))
    }
}

/// Training data layout, held-out size and schedule shared by all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub data: SyntheticSpec,
    /// Samples per cluster in the clean held-out set.
    pub test_per_class: usize,
    pub data_noise_severity: f64,
    pub train: TrainConfig,
    pub threshold: f64,
}

impl Default for Benchmark {
    /// Spoof types sit far apart on their own axes while live and the spoof
    /// centroid overlap heavily, so the semantic head carries real signal.
    fn default() -> Self {
        let mut categories = BTreeMap::new();
        categories.insert(SPOOF_TYPE.to_string(), 3);
        let mut data = SyntheticSpec::new(200, 16, categories, 3.0);
        data.separation = 3.0;
        data.spoof_spread = 4.0;
        let mut train = TrainConfig::default();
        train.stage1.lr = 1e-3;
        train.hidden = vec![64, 64];
        train.embed_dim = 32;
        // An affine head on raw embeddings diverges under SGD at lr 0.1.
        train.dq_hidden = vec![16];
        Benchmark {
            data,
            test_per_class: 250,
            data_noise_severity: 2.0,
            train,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Seeds of the training set, the held-out set and the noise draw for one run.
fn cell_seeds(seed: u64) -> (u64, u64, u64) {
    (seed, seed ^ 0x7e57_0000_0000_0000, seed ^ 0x0015_e000_0000_0000)
}

impl Benchmark {
    pub fn train_set(&self, seed: u64) -> Result<Dataset> {
        self.data.generate(cell_seeds(seed).0)
    }

    pub fn test_set(&self, seed: u64) -> Result<Dataset> {
        let mut spec = self.data.clone();
        spec.n_per_class = self.test_per_class;
        spec.generate(cell_seeds(seed).1)
    }

    /// Training set with `fraction` of `kind` noise injected.
    pub fn noisy_train_set(&self, kind: NoiseKind, fraction: f64, seed: u64) -> Result<Dataset> {
        let clean = self.train_set(seed)?;
        let noise_seed = cell_seeds(seed).2;
        match kind {
            NoiseKind::Semantic => inject_semantic_label_noise(&clean, fraction, noise_seed),
            NoiseKind::Binary => inject_binary_label_noise(&clean, fraction, noise_seed),
            NoiseKind::Data => inject_data_noise(&clean, fraction, self.data_noise_severity, noise_seed),
        }
    }

    pub fn arm_config(&self, arm: Arm, seed: u64) -> TrainConfig {
        let mut c = arm.apply(&self.train);
        c.seed = seed;
        c
    }
}

/// Trains one arm and evaluates it on `test`.
pub fn train_and_evaluate(
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    corrected: bool,
    threshold: f64,
) -> Result<(ModelParams, TrainLog, EvalReport)> {
    let (params, log) = train_full_dpm(train, config)?;
    let report = evaluate_params(&params, test, corrected, threshold)?;
    Ok((params, log, report))
}

pub fn evaluate_params(params: &ModelParams, test: &Dataset, corrected: bool, threshold: f64) -> Result<EvalReport> {
    let batch = Batch::full(test);
    let (preds, _) = predict_batch(params, batch.x.view(), corrected)?;
    evaluate(&live_scores(&preds).to_vec(), &batch.c, threshold, &DEFAULT_FPR_TARGETS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: NoiseKind,
    pub fraction: f64,
    pub arm: Arm,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub report: EvalReport,
}

pub fn run_cell(bench: &Benchmark, cell: Cell) -> Result<CellResult> {
    let train = bench.noisy_train_set(cell.kind, cell.fraction, cell.seed)?;
    let test = bench.test_set(cell.seed)?;
    let config = bench.arm_config(cell.arm, cell.seed);
    let (_, _, report) = train_and_evaluate(&train, &test, &config, cell.arm.corrected(), bench.threshold)?;
    Ok(CellResult { cell, report })
}

/// Runs every cell on a pool of scoped threads. Results come back in the
/// canonical order of `cells`, whatever order they finish in.
pub fn run_cells(bench: &Benchmark, cells: &[Cell], threads: usize) -> Result<Vec<CellResult>> {
    let threads = threads.max(1).min(cells.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<CellResult>>> = (0..cells.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let r = run_cell(bench, cells[i]);
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every cell was visited"))
        .collect()
}

/// Every combination in canonical order: kind, fraction, arm, seed.
pub fn sweep_cells(kinds: &[(NoiseKind, Vec<f64>)], arms: &[Arm], seeds: &[u64]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (kind, fractions) in kinds {
        for &fraction in fractions {
            for &arm in arms {
                for &seed in seeds {
                    cells.push(Cell {
                        kind: *kind,
                        fraction,
                        arm,
                        seed,
                    });
                }
            }
        }
    }
    cells
}

pub const SWEEP_HEADER: &str = "row,noise_kind,fraction,arm,seed,acer,apcer,bpcer,acer_std,apcer_std,bpcer_std";

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// (kind, fraction, arm) and the (mean, std) of ACER, APCER and BPCER.
pub type AggregateRow = (NoiseKind, f64, Arm, [(f64, f64); 3]);

/// Mean and sample standard deviation per (kind, fraction, arm), in
/// first-seen order.
pub fn aggregate(results: &[CellResult]) -> Vec<AggregateRow> {
    type Key = (NoiseKind, u64, Arm);
    let mut groups: Vec<(Key, Vec<&EvalReport>)> = Vec::new();
    for r in results {
        let key = (r.cell.kind, r.cell.fraction.to_bits(), r.cell.arm);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(&r.report),
            None => groups.push((key, vec![&r.report])),
        }
    }
    groups
        .into_iter()
        .map(|((kind, bits, arm), reports)| {
            let col = |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
            (
                kind,
                f64::from_bits(bits),
                arm,
                [col(|r| r.acer), col(|r| r.apcer), col(|r| r.bpcer)],
            )
        })
        .collect()
}

/// Per-seed rows (`row=seed`) followed by aggregate rows (`row=mean`, seed empty).
pub fn sweep_csv(results: &[CellResult]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "seed,{},{},{},{},{},{},{},,,",
            r.cell.kind, r.cell.fraction, r.cell.arm, r.cell.seed, r.report.acer, r.report.apcer, r.report.bpcer
        );
    }
    for (kind, fraction, arm, [acer, apcer, bpcer]) in aggregate(results) {
        let _ = writeln!(
            out,
            "mean,{kind},{fraction},{arm},,{},{},{},{},{},{}",
            acer.0, apcer.0, bpcer.0, acer.1, apcer.1, bpcer.1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arms_map_onto_enable_bits() {
        let base = TrainConfig::default();
        let bits = |a: Arm| {
            let c = a.apply(&base);
            (c.enable_semantic, c.enable_lq, c.enable_dq)
        };
        assert_eq!(bits(Arm::Baseline), (false, false, false));
        assert_eq!(bits(Arm::S), (true, false, false));
        assert_eq!(bits(Arm::SLq), (true, true, false));
        assert_eq!(bits(Arm::SLqDq), (true, true, true));
        for a in Arm::ALL {
            assert_eq!(a.name().parse::<Arm>().unwrap(), a);
            a.apply(&base).validate().unwrap();
        }
        assert!("s+lq".parse::<Arm>().is_err());
    }

    #[test]
    fn sweep_cell_count() {
        let kinds = vec![
            (NoiseKind::Semantic, NoiseKind::Semantic.default_fractions().to_vec()),
            (NoiseKind::Data, NoiseKind::Data.default_fractions().to_vec()),
        ];
        let cells = sweep_cells(&kinds, &Arm::ALL, &[1, 2, 3, 4, 5]);
        assert_eq!(cells.len(), 2 * 5 * 4 * 5);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.290_994_448_735_805_6).abs() < 1e-12);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn noise_only_touches_training_data() {
        let bench = Benchmark::default();
        let clean = bench.train_set(3).unwrap();
        let noisy = bench.noisy_train_set(NoiseKind::Data, 0.3, 3).unwrap();
        let corrupted = noisy.samples.iter().filter(|s| s.noise.data_corrupted).count();
        assert_eq!(corrupted, (0.3 * clean.len() as f64 + 0.5).floor() as usize);
        assert!(bench.test_set(3).unwrap().samples.iter().all(|s| s.noise.is_clean()));
    }
}
