//! One test per acceptance criterion. Each writes a single PASS or FAIL line
//! straight to stdout, past libtest's capture, before asserting.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::gradcheck::gradient_suite;
use common::{brute_force_tpr_at_fpr, gaussian_expectation_2d, mean_se, pairwise_auc, random_scored_instance, rng};
use dpm_core::data::{inject_data_noise, inject_semantic_label_noise, LIVE};
use dpm_core::experiment::{run_cells, sweep_cells, train_and_evaluate, Arm, Benchmark, NoiseKind};
use dpm_core::inference::{corrected_confidence, predict_batch};
use dpm_core::losses::{dq_gaussian_nll, semantic_ce_deterministic, semantic_ce_probabilistic};
use dpm_core::metrics::{acer, evaluate, roc_auc, roc_sweep, tpr_at_fpr};
use dpm_core::training::train_full_dpm;
use ndarray::{arr1, arr2, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=5;

fn verdict(criterion: u8, pass: bool, detail: &str) {
    let line = format!("\n{} criterion {criterion}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let results = gradient_suite();
    let elapsed = start.elapsed();
    let mut pass = elapsed < Duration::from_secs(60);
    let mut lines = Vec::new();
    for r in &results {
        pass &= r.worst < 1e-4 && r.configs >= 10;
        lines.push(format!("{} {:.1e} over {}", r.name, r.worst, r.configs));
    }
    verdict(
        1,
        pass,
        &format!("{} checks, worst relative error <1e-4, {:.1}s [{}]", results.len(), elapsed.as_secs_f64(), lines.join("; ")),
    );
}

#[test]
fn criterion_2_reduction_identities() {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (n, d, k) = (r.random_range(1..6), r.random_range(1..5), r.random_range(2..5));
        let mu = common::normal_matrix(&mut r, n, d, 1.5);
        let omega = common::normal_matrix(&mut r, k, d, 1.5);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let sigma = common::normal_matrix(&mut r, n, d, 1.0).mapv(f64::abs);
        let eps = common::normal_matrix(&mut r, n, d, 1.0);
        let det = semantic_ce_deterministic(mu.view(), omega.view(), &labels).unwrap().per_sample;
        let zero = Array2::zeros((n, d));
        for (s, e) in [(&zero, &eps), (&sigma, &zero)] {
            let prob = semantic_ce_probabilistic(mu.view(), s.view(), omega.view(), &labels, e.view()).unwrap();
            worst = worst.max((&prob.per_sample - &det).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)));
        }

        let row = common::normal_matrix(&mut r, 1, d, 1.0);
        let protos = common::normal_matrix(&mut r, 2, d, 1.0);
        let p = corrected_confidence(row.row(0), protos.view(), 0.5).unwrap();
        let sq = |j: usize| (&protos.row(j) - &row.row(0)).mapv(|v| v * v).sum();
        let (a, b) = (-sq(0), -sq(1));
        let m = a.max(b);
        let live = (b - m).exp() / ((a - m).exp() + (b - m).exp());
        worst = worst.max((p.probs[1] - live).abs()).max((p.probs[0] - (1.0 - live)).abs());

        let scores: Vec<f64> = (0..50).map(|_| r.random()).collect();
        let mut c: Vec<u8> = (0..50).map(|_| r.random_range(0..2)).collect();
        c[0] = 0;
        c[1] = 1;
        let report = evaluate(&scores, &c, r.random(), &[0.1]).unwrap();
        worst = worst.max((report.acer - (report.apcer + report.bpcer) / 2.0).abs());
    }
    verdict(2, worst <= 1e-12, &format!("sigma=0, eps=0, sigma^2=1/2 and ACER identities, max deviation {worst:.1e} <= 1e-12"));
}

#[test]
fn criterion_3_quality_loss_is_minimized_at_the_squared_distance() {
    let mut r = rng(3);
    // log-spaced variance grid, 1e-4 .. 1e2
    let steps = 601;
    let (lo, hi) = (-4.0f64, 2.0f64);
    let step = (hi - lo) / (steps - 1) as f64;
    let grid: Vec<f64> = (0..steps).map(|i| 10f64.powf(lo + i as f64 * step)).collect();
    let mut worst_steps = 0.0f64;
    for _ in 0..20 {
        let d = r.random_range(2..6);
        let mu = common::normal_matrix(&mut r, 1, d, 1.0);
        let omega = common::normal_matrix(&mut r, 2, d, 1.0);
        let target = (&omega.row(1) - &mu.row(0)).mapv(|v| v * v).sum();
        let losses: Vec<f64> = grid
            .iter()
            .map(|&s| dq_gaussian_nll(mu.view(), omega.view(), &[1], &arr1(&[s])).unwrap().total)
            .collect();
        let best = (0..steps).min_by(|&a, &b| losses[a].total_cmp(&losses[b])).unwrap();
        let off = (grid[best].log10() - target.log10()).abs() / step;
        worst_steps = worst_steps.max(off);
    }
    verdict(3, worst_steps <= 1.0, &format!("20 distances, argmin within {worst_steps:.2} grid steps of |w-mu|^2 (limit 1)"));
}

#[test]
fn criterion_4_monte_carlo_matches_quadrature() {
    let start = Instant::now();
    let mu = arr2(&[[0.4, -0.7], [-0.2, 0.9]]);
    let sigma = arr2(&[[0.8, 0.5], [1.2, 0.3]]);
    let omega = arr2(&[[1.1, -0.4], [-0.6, 0.8]]);
    let labels = [0usize, 1];

    let per_row = |i: usize, e1: f64, e2: f64| {
        let m = mu.slice(ndarray::s![i..i + 1, ..]);
        let s = sigma.slice(ndarray::s![i..i + 1, ..]);
        let e = arr2(&[[e1, e2]]);
        semantic_ce_probabilistic(m, s, omega.view(), &labels[i..i + 1], e.view()).unwrap().total
    };
    let exact = (0..2).map(|i| gaussian_expectation_2d(|a, b| per_row(i, a, b), 241)).sum::<f64>() / 2.0;

    let mut r = rng(4);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            let eps = Array2::from_shape_fn((2, 2), |_| r.sample::<f64, _>(StandardNormal));
            semantic_ce_probabilistic(mu.view(), sigma.view(), omega.view(), &labels, eps.view()).unwrap().total
        })
        .collect();
    let (mean, se) = mean_se(&draws);
    let z = (mean - exact).abs() / se;
    let elapsed = start.elapsed();
    verdict(
        4,
        z <= 3.0 && elapsed < Duration::from_secs(60),
        &format!("MC {mean:.5} vs quadrature {exact:.5}, {z:.2} SE (limit 3), {:.1}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_5_label_quality_helps_under_semantic_noise() {
    let start = Instant::now();
    let bench = Benchmark::default();
    let seeds: Vec<u64> = (1..=10).collect();
    let cells = sweep_cells(&[(NoiseKind::Semantic, vec![0.2, 0.5])], &[Arm::S, Arm::SLq], &seeds);
    let results = run_cells(&bench, &cells, threads()).unwrap();
    let mean_acer = |fraction: f64, arm: Arm| {
        let xs: Vec<f64> = results
            .iter()
            .filter(|c| c.cell.fraction == fraction && c.cell.arm == arm)
            .map(|c| c.report.acer)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for f in [0.2, 0.5] {
        let (s, lq) = (mean_acer(f, Arm::S), mean_acer(f, Arm::SLq));
        pass &= lq <= s;
        detail.push(format!("{:.0}% noise: S {s:.2} vs S-LQ {lq:.2}", f * 100.0));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    verdict(
        5,
        pass,
        &format!("mean ACER over {} seeds, {}, {:.0}s", seeds.len(), detail.join(", "), elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_6_corrupted_samples_get_larger_quality_variance() {
    let bench = Benchmark::default();
    let mut separated = 0;
    let (mut corrected, mut uncorrected) = (Vec::new(), Vec::new());
    let mut detail = Vec::new();
    for seed in SEEDS {
        let train = bench.noisy_train_set(NoiseKind::Data, 0.3, seed).unwrap();
        assert_eq!(bench.data_noise_severity, 2.0);
        let (params, _) = train_full_dpm(&train, &bench.arm_config(Arm::SLqDq, seed)).unwrap();
        let x = train.features();
        let (with, batch) = predict_batch(&params, x.view(), true).unwrap();
        let (without, _) = predict_batch(&params, x.view(), false).unwrap();
        let quality = batch.sigma_d_sq.unwrap();
        let mean_where = |corrupt: bool| {
            let v: Vec<f64> = train
                .samples
                .iter()
                .zip(quality.iter())
                .filter(|(s, _)| s.noise.data_corrupted == corrupt)
                .map(|(_, &q)| q)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (bad, good) = (mean_where(true), mean_where(false));
        if bad > good {
            separated += 1;
        }
        detail.push(format!("seed {seed} {bad:.3}/{good:.3}"));
        // corrupted live samples are the ones at risk of a false reject
        for (i, s) in train.samples.iter().enumerate() {
            if s.noise.data_corrupted && s.c == LIVE {
                corrected.push(with[i].p_live());
                uncorrected.push(without[i].p_live());
            }
        }
    }
    let (pc, pu) = (mean(&corrected), mean(&uncorrected));
    verdict(
        6,
        separated >= 4 && pc < pu,
        &format!(
            "corrupted>clean sigma_D^2 in {separated}/5 seeds (need 4) [{}]; corrupted live p_live corrected {pc:.3} < uncorrected {pu:.3} over {} samples",
            detail.join(", "),
            corrected.len()
        ),
    );
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn criterion_7_ablation_ordering_under_mixed_noise() {
    let bench = Benchmark::default();
    let arms = Arm::ALL;
    let mut sums = [0.0; 4];
    let mut detail = Vec::new();
    for seed in SEEDS {
        let train = bench.train_set(seed).unwrap();
        let train = inject_semantic_label_noise(&train, 0.2, seed + 1000).unwrap();
        let train = inject_data_noise(&train, 0.2, bench.data_noise_severity, seed + 2000).unwrap();
        let test = bench.test_set(seed).unwrap();
        let mut row = Vec::new();
        for (i, arm) in arms.iter().enumerate() {
            let config = bench.arm_config(*arm, seed);
            let (_, _, report) = train_and_evaluate(&train, &test, &config, arm.corrected(), bench.threshold).unwrap();
            sums[i] += report.acer;
            row.push(format!("{:.2}", report.acer));
        }
        detail.push(format!("seed {seed} [{}]", row.join(" ")));
    }
    let n = SEEDS.count() as f64;
    let means = sums.map(|s| s / n);
    let ordered = means.windows(2).all(|w| w[1] <= w[0]);
    let chain = arms
        .iter()
        .zip(means)
        .map(|(a, m)| format!("{a} {m:.2}"))
        .collect::<Vec<_>>()
        .join(" >= ");
    println!("{}", detail.join("\n"));
    verdict(7, ordered, &format!("mean ACER non-increasing over 5 seeds: {chain}"));
}

#[test]
fn criterion_8_metrics_match_exhaustive_oracles() {
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (scores, labels) = random_scored_instance(&mut r);
        let roc = roc_sweep(&scores, &labels).unwrap();
        worst = worst.max((roc_auc(&roc) - pairwise_auc(&scores, &labels)).abs());
        for p in &roc[1..roc.len() - 1] {
            let (tpr, fpr) = common::rates_at(&scores, &labels, p.threshold);
            worst = worst.max((p.tpr - tpr).abs()).max((p.fpr - fpr).abs());
        }
        for target in [0.001, 0.01, 0.1] {
            let got = tpr_at_fpr(&scores, &labels, target).unwrap().tpr;
            worst = worst.max((got - brute_force_tpr_at_fpr(&scores, &labels, target)).abs());
        }
    }
    let table = acer(2.29, 0.96);
    let rounded = (table * 100.0).round() / 100.0;
    verdict(
        8,
        worst < 1e-12 && (table - 1.625).abs() < 1e-12 && rounded == 1.63,
        &format!("100 instances, max oracle deviation {worst:.1e}; ACER(2.29, 0.96) = {table} -> {rounded:.2}"),
    );
}

fn run_pipeline(dir: &Path) {
    let dpm = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_dpm")).args(args).current_dir(dir).output().unwrap();
        assert!(out.status.success(), "dpm {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    fs::write(dir.join("run.cfg"), "stage1.lr = 1e-3\nstage1.epochs = 10\nstage2.epochs = 10\nmodel.dq_hidden = 16\n").unwrap();
    dpm(&["gen-data", "--n", "100", "--spoof-types", "3", "--semantic-noise", "0.2", "--data-noise", "0.2", "--seed", "9", "--out", "data"]);
    dpm(&["train", "--data", "data/dataset.txt", "--config", "run.cfg", "--seed", "9", "--out", "train"]);
    dpm(&["eval", "--checkpoint", "train/checkpoint.json", "--data", "data/dataset.txt", "--out", "eval"]);
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["data", "train", "eval"] {
        let mut entries: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            out.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn criterion_9_pipeline_is_byte_identical_on_rerun() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    let pass = fa.len() == fb.len() && differing.is_empty() && names.contains(&"train/checkpoint.json");
    verdict(
        9,
        pass,
        &format!("gen-data -> train -> eval twice, {} files compared, differing: {differing:?}", fa.len()),
    );
}
