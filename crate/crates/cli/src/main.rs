//! `dpm`: dataset generation, two-stage training, evaluation, noise sweeps and
//! quality reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dpm_core::data::{
    inject_binary_label_noise, inject_data_noise, inject_semantic_label_noise, load_dataset, save_dataset,
    Dataset, SyntheticSpec, SPOOF_TYPE,
};
use dpm_core::experiment::{run_cells, sweep_cells, sweep_csv, Arm, Benchmark, NoiseKind};
use dpm_core::generalized::{run_generalized_pipeline, PipelineConfig, TaggerConfig};
use dpm_core::inference::{predict_batch, prediction_records, save_dump};
use dpm_core::losses::Batch;
use dpm_core::metrics::{evaluate_records, DEFAULT_FPR_TARGETS};
use dpm_core::training::{load_checkpoint, save_checkpoint, train_full_dpm, TrainConfig};
use dpm_core::DpmError;

/// Default parent of command output directories when `--out` is not given.
const OUTPUT_ROOT_ENV: &str = "DPM_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "dpm", version, about = "Noise-robust live/spoof classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset, optionally with injected noise.
    GenData(GenDataArgs),
    /// Train one ablation arm on a dataset file.
    Train(TrainArgs),
    /// Evaluate a checkpoint with and without confidence correction.
    Eval(EvalArgs),
    /// Sweep noise fractions over arms and seeds on the built-in benchmark.
    NoiseSweep(SweepArgs),
    /// Per-sample data-quality variances and their histogram.
    QualityReport(QualityArgs),
    /// Tag a label-deficient dataset with a tagger trained on a label-sufficient one, then train and evaluate.
    Generalized(GeneralizedArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory; defaults to `$DPM_OUTPUT_ROOT/<command>` or `runs/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Samples per cluster (one live cluster plus one per spoof type).
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    spoof_types: usize,
    /// Extra semantic attribute as NAME:CARDINALITY; repeatable.
    #[arg(long = "attribute", value_parser = parse_attribute)]
    attributes: Vec<(String, usize)>,
    #[arg(long, default_value_t = 1.0)]
    overlap: f64,
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    spoof_spread: f64,
    /// Standard deviation of a random shift applied to every cluster center.
    #[arg(long, default_value_t = 0.0)]
    center_shift: f64,
    #[arg(long, default_value_t = 0)]
    shift_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    semantic_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    binary_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    data_noise: f64,
    #[arg(long, default_value_t = 2.0)]
    severity: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset file written by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    /// Flat `key = value` training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ablation arm; overrides the enable flags of the configuration.
    #[arg(long, value_parser = parse_arm)]
    arm: Option<Arm>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Live-probability threshold for acceptance.
    #[arg(long, default_value_t = dpm_core::metrics::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Only the corrected report.
    #[arg(long, conflicts_with = "uncorrected")]
    corrected: bool,
    /// Only the uncorrected report.
    #[arg(long)]
    uncorrected: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Noise kind to sweep; repeatable. Defaults to all three.
    #[arg(long = "noise-kind", value_parser = parse_kind)]
    kinds: Vec<NoiseKind>,
    /// Comma-separated fractions; defaults to the grid of each kind.
    #[arg(long, value_parser = parse_fractions)]
    fractions: Option<Fractions>,
    /// Arm to run; repeatable. Defaults to all four.
    #[arg(long = "arm", value_parser = parse_arm)]
    arms: Vec<Arm>,
    /// Inclusive seed range `A..B`, or a single seed.
    #[arg(long, default_value = "1..5", value_parser = parse_seeds)]
    seeds: Seeds,
    /// Training configuration replacing the benchmark schedule.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct QualityArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Histogram bins over log10 of the variance.
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct GeneralizedArgs {
    /// Dataset with sufficient semantic annotations.
    #[arg(long)]
    suf: PathBuf,
    /// Dataset to self-label.
    #[arg(long)]
    def: PathBuf,
    /// Held-out dataset for evaluation.
    #[arg(long)]
    eval: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_arm)]
    arm: Option<Arm>,
    /// Share of self-distributed spoof-type labels re-drawn after tagging.
    #[arg(long, default_value_t = 0.0)]
    semantic_noise: f64,
    /// Also train and report all four arms.
    #[arg(long)]
    four_arm: bool,
    #[arg(long, default_value_t = dpm_core::metrics::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    out: OutArg,
}

fn parse_arm(s: &str) -> Result<Arm, String> {
    s.parse().map_err(|e: DpmError| e.to_string())
}

fn parse_kind(s: &str) -> Result<NoiseKind, String> {
    s.parse().map_err(|e: DpmError| e.to_string())
}

fn parse_attribute(s: &str) -> Result<(String, usize), String> {
    let (name, card) = s
        .split_once(':')
        .ok_or_else(|| format!("expected NAME:CARDINALITY, found {s:?}"))?;
    let card = card.parse().map_err(|e| format!("cardinality of {name:?}: {e}"))?;
    Ok((name.to_string(), card))
}

/// Wrapped so clap treats the comma list as a single value.
#[derive(Debug, Clone)]
struct Fractions(Vec<f64>);

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_fractions(s: &str) -> Result<Fractions, String> {
    s.split(',')
        .map(|v| {
            let f: f64 = v.trim().parse().map_err(|e| format!("fraction {v:?}: {e}"))?;
            if (0.0..=1.0).contains(&f) {
                Ok(f)
            } else {
                Err(format!("fraction {f} outside [0, 1]"))
            }
        })
        .collect::<Result<_, _>>()
        .map(Fractions)
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let seeds = match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.parse().map_err(|e| format!("seed range start: {e}"))?;
            let b: u64 = b.parse().map_err(|e| format!("seed range end: {e}"))?;
            if b < a {
                return Err(format!("empty seed range {a}..{b}"));
            }
            (a..=b).collect()
        }
        None => vec![s.parse().map_err(|e| format!("seed: {e}"))?],
    };
    Ok(Seeds(seeds))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(DpmError),
}

impl From<DpmError> for Failure {
    fn from(e: DpmError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(DpmError::Config(_)) => 1,
            Failure::Core(DpmError::Divergence { .. }) => 3,
            Failure::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Core(e) => e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Files are written into a hidden sibling directory and moved into place in
/// one rename, so a reader never sees a half-written output directory.
struct Staging {
    target: PathBuf,
    tmp: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn begin(target: PathBuf) -> CliResult<Self> {
        if target.exists() && fs::read_dir(&target)?.next().is_some() {
            return Err(Failure::Usage(format!(
                "output directory {} already exists and is not empty",
                target.display()
            )));
        }
        let parent = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&parent)?;
        let name = target
            .file_name()
            .ok_or_else(|| Failure::Usage(format!("invalid output directory {}", target.display())))?
            .to_string_lossy()
            .into_owned();
        let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir(&tmp)?;
        Ok(Staging {
            target,
            tmp,
            files: Vec::new(),
        })
    }

    fn path(&mut self, file: &str) -> PathBuf {
        self.files.push(file.to_string());
        self.tmp.join(file)
    }

    fn write(&mut self, file: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let p = self.path(file);
        fs::write(p, contents)?;
        Ok(())
    }

    /// Writes the manifest last and publishes the directory.
    fn commit(mut self, mut manifest: serde_json::Value) -> CliResult<PathBuf> {
        manifest["output_dir"] = json!(self.target.display().to_string());
        manifest["files"] = json!(self.files);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.tmp.join("manifest.json"), text)?;
        if self.target.exists() {
            fs::remove_dir(&self.target)?;
        }
        fs::rename(&self.tmp, &self.target)?;
        Ok(std::mem::take(&mut self.target))
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.tmp.exists() {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn output_dir(out: &OutArg, command: &str) -> PathBuf {
    out.out.clone().unwrap_or_else(|| {
        std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(command)
    })
}

fn load_config(path: Option<&Path>, base: TrainConfig) -> CliResult<TrainConfig> {
    match path {
        Some(p) => Ok(TrainConfig::load(p)?),
        None => Ok(base),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_gen_data(a: &GenDataArgs) -> CliResult<()> {
    let mut categories = std::collections::BTreeMap::new();
    categories.insert(SPOOF_TYPE.to_string(), a.spoof_types);
    for (name, card) in &a.attributes {
        if categories.insert(name.clone(), *card).is_some() {
            return Err(Failure::Usage(format!("category {name:?} given twice")));
        }
    }
    let mut spec = SyntheticSpec::new(a.n, a.dim, categories, a.overlap);
    spec.separation = a.separation;
    spec.spoof_spread = a.spoof_spread;
    spec.center_shift = a.center_shift;
    spec.shift_seed = a.shift_seed;
    let ds = spec.generate(a.seed)?;
    let ds = inject_semantic_label_noise(&ds, a.semantic_noise, a.seed)?;
    let ds = inject_binary_label_noise(&ds, a.binary_noise, a.seed)?;
    let ds = inject_data_noise(&ds, a.data_noise, a.severity, a.seed)?;

    let mut out = Staging::begin(output_dir(&a.out, "gen-data"))?;
    save_dataset(&ds, out.path("dataset.txt"))?;
    let counts = counts(&ds);
    let target = out.commit(json!({
        "experiment": "gen-data",
        "generator": spec,
        "noise": {
            "semantic": a.semantic_noise,
            "binary": a.binary_noise,
            "data": a.data_noise,
            "severity": a.severity,
        },
        "seeds": [a.seed],
        "counts": counts,
    }))?;
    println!(
        "seed={} samples={} live={} spoof={} semantic_reassigned={} label_flipped={} data_corrupted={} -> {}",
        a.seed,
        counts["samples"],
        counts["live"],
        counts["spoof"],
        counts["semantic_reassigned"],
        counts["label_flipped"],
        counts["data_corrupted"],
        target.join("dataset.txt").display()
    );
    Ok(())
}

fn counts(ds: &Dataset) -> serde_json::Value {
    let flag = |f: fn(&dpm_core::data::Sample) -> bool| ds.samples.iter().filter(|s| f(s)).count();
    json!({
        "samples": ds.len(),
        "live": ds.count_live(),
        "spoof": ds.len() - ds.count_live(),
        "semantic_reassigned": flag(|s| s.noise.semantic_reassigned),
        "label_flipped": flag(|s| s.noise.label_flipped),
        "data_corrupted": flag(|s| s.noise.data_corrupted),
    })
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let mut config = load_config(a.config.as_deref(), TrainConfig::default())?;
    if let Some(arm) = a.arm {
        config = arm.apply(&config);
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;
    let (params, log) = train_full_dpm(&ds, &config)?;

    let mut out = Staging::begin(output_dir(&a.out, "train"))?;
    save_checkpoint(out.path("checkpoint.json"), &params, &config, None)?;
    out.write("train_log.jsonl", log.to_jsonl()?)?;
    out.write("config.txt", config.to_text())?;
    let target = out.commit(json!({
        "experiment": "train",
        "config_path": a.config.as_deref().map(display),
        "resolved_config": config,
        "arm": a.arm.map(Arm::name),
        "datasets": [display(&a.data)],
        "seeds": [config.seed],
    }))?;
    let last = log.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs (stage {} loss {:.6}, train accuracy {:.4}) -> {}",
        log.epochs.len(),
        last.stage,
        last.loss,
        last.train_accuracy,
        target.display()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Failure::Usage(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    let ds = load_dataset(&a.data)?;
    let (params, _, _) = load_checkpoint(&a.checkpoint, None)?;
    let modes: Vec<bool> = match (a.corrected, a.uncorrected) {
        (true, _) => vec![true],
        (_, true) => vec![false],
        _ => vec![false, true],
    };
    let batch = Batch::full(&ds);
    let mut out = Staging::begin(output_dir(&a.out, "eval"))?;
    let mut reports = Vec::new();
    for corrected in modes {
        let (preds, _) = predict_batch(&params, batch.x.view(), corrected)?;
        let records = prediction_records(&ds, &preds);
        let name = if corrected { "corrected" } else { "uncorrected" };
        save_dump(&records, out.path(&format!("predictions_{name}.csv")))?;
        let report = evaluate_records(&records, a.threshold, &DEFAULT_FPR_TARGETS)?;
        out.write(&format!("report_{name}.json"), report.to_json()?)?;
        println!(
            "{name}: ACER {:.4}% (APCER {:.4}%, BPCER {:.4}%), AUC {:.6}",
            report.acer, report.apcer, report.bpcer, report.auc
        );
        reports.push(report);
    }
    if let [uncorrected, corrected] = reports.as_slice() {
        let delta = corrected.delta_from(uncorrected);
        let mut text = serde_json::to_string_pretty(&json!({
            "corrected_minus_uncorrected": {
                "apcer": delta.apcer,
                "bpcer": delta.bpcer,
                "acer": delta.acer,
                "hter": delta.hter,
                "auc": delta.auc,
            }
        }))?;
        text.push('\n');
        out.write("delta.json", text)?;
    }
    out.commit(json!({
        "experiment": "eval",
        "checkpoint": display(&a.checkpoint),
        "datasets": [display(&a.data)],
        "threshold": a.threshold,
    }))?;
    Ok(())
}

fn cmd_noise_sweep(a: &SweepArgs) -> CliResult<()> {
    let mut bench = Benchmark::default();
    bench.train = load_config(a.config.as_deref(), bench.train)?;
    let kinds: Vec<NoiseKind> = if a.kinds.is_empty() {
        NoiseKind::ALL.to_vec()
    } else {
        a.kinds.clone()
    };
    let arms: Vec<Arm> = if a.arms.is_empty() { Arm::ALL.to_vec() } else { a.arms.clone() };
    let grid: Vec<(NoiseKind, Vec<f64>)> = kinds
        .iter()
        .map(|&k| (k, a.fractions.as_ref().map(|f| f.0.clone()).unwrap_or_else(|| k.default_fractions().to_vec())))
        .collect();
    let cells = sweep_cells(&grid, &arms, &a.seeds.0);
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = run_cells(&bench, &cells, threads)?;

    let mut out = Staging::begin(output_dir(&a.out, "noise-sweep"))?;
    out.write("sweep.csv", sweep_csv(&results))?;
    let target = out.commit(json!({
        "experiment": "noise-sweep",
        "config_path": a.config.as_deref().map(display),
        "benchmark": bench,
        "grid": grid.iter().map(|(k, f)| json!({"noise_kind": k.name(), "fractions": f})).collect::<Vec<_>>(),
        "arms": arms.iter().map(|a| a.name()).collect::<Vec<_>>(),
        "seeds": a.seeds.0,
    }))?;
    println!("{} cells -> {}", results.len(), target.join("sweep.csv").display());
    Ok(())
}

fn cmd_quality_report(a: &QualityArgs) -> CliResult<()> {
    if a.bins < 1 {
        return Err(Failure::Usage("--bins must be >= 1".into()));
    }
    let ds = load_dataset(&a.data)?;
    let (params, _, _) = load_checkpoint(&a.checkpoint, None)?;
    let batch = Batch::full(&ds);
    let emb = params.forward_all(batch.x.view())?;
    let quality = emb.sigma_d_sq.expect("forward_all fills the data-quality variance");

    let mut table = String::from("id,sigma_d_sq,data_corrupted,corruption_severity,label,semantic_reassigned,label_flipped\n");
    for (s, q) in ds.samples.iter().zip(quality.iter()) {
        let _ = writeln!(
            table,
            "{},{:e},{},{},{},{},{}",
            s.id,
            q,
            u8::from(s.noise.data_corrupted),
            s.noise.corruption_severity,
            s.c,
            u8::from(s.noise.semantic_reassigned),
            u8::from(s.noise.label_flipped)
        );
    }

    let logs: Vec<f64> = quality.iter().map(|q| q.log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / a.bins as f64 } else { 1.0 };
    let mut clean = vec![0usize; a.bins];
    let mut corrupted = vec![0usize; a.bins];
    for (s, l) in ds.samples.iter().zip(&logs) {
        let bin = (((l - lo) / width) as usize).min(a.bins - 1);
        if s.noise.data_corrupted {
            corrupted[bin] += 1;
        } else {
            clean[bin] += 1;
        }
    }
    let mut hist = String::from("bin,log10_lower,log10_upper,count,clean,corrupted\n");
    for b in 0..a.bins {
        let _ = writeln!(
            hist,
            "{b},{},{},{},{},{}",
            lo + b as f64 * width,
            lo + (b + 1) as f64 * width,
            clean[b] + corrupted[b],
            clean[b],
            corrupted[b]
        );
    }

    let mean = |want: bool| {
        let v: Vec<f64> = ds
            .samples
            .iter()
            .zip(quality.iter())
            .filter(|(s, _)| s.noise.data_corrupted == want)
            .map(|(_, &q)| q)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let (mean_clean, mean_corrupted) = (mean(false), mean(true));
    let summary = json!({
        "n": ds.len(),
        "n_clean": clean.iter().sum::<usize>(),
        "n_corrupted": corrupted.iter().sum::<usize>(),
        "mean_sigma_d_sq_clean": mean_clean,
        "mean_sigma_d_sq_corrupted": mean_corrupted,
        "corrupted_minus_clean": mean_clean.zip(mean_corrupted).map(|(c, k)| k - c),
    });

    let mut out = Staging::begin(output_dir(&a.out, "quality-report"))?;
    out.write("quality.csv", table)?;
    out.write("histogram.csv", hist)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    out.write("summary.json", text)?;
    let target = out.commit(json!({
        "experiment": "quality-report",
        "checkpoint": display(&a.checkpoint),
        "datasets": [display(&a.data)],
        "bins": a.bins,
    }))?;
    println!(
        "mean sigma_D^2: clean {} corrupted {} -> {}",
        mean_clean.map_or("n/a".into(), |v| format!("{v:.6}")),
        mean_corrupted.map_or("n/a".into(), |v| format!("{v:.6}")),
        target.display()
    );
    Ok(())
}

fn cmd_generalized(a: &GeneralizedArgs) -> CliResult<()> {
    let d_suf = load_dataset(&a.suf)?;
    let d_def = load_dataset(&a.def)?;
    let eval = load_dataset(&a.eval)?;
    let mut train = load_config(a.config.as_deref(), TrainConfig::default())?;
    if let Some(arm) = a.arm {
        train = arm.apply(&train);
    }
    if let Some(seed) = a.seed {
        train.seed = seed;
    }
    train.validate()?;
    if !(0.0..=1.0).contains(&a.semantic_noise) {
        return Err(Failure::Usage(format!("--semantic-noise {} outside [0, 1]", a.semantic_noise)));
    }
    let config = PipelineConfig {
        tagger: TaggerConfig {
            seed: train.seed,
            ..TaggerConfig::default()
        },
        train,
        threshold: a.threshold,
        semantic_noise_fraction: a.semantic_noise,
        four_arm: a.four_arm,
    };
    let (params, report) = run_generalized_pipeline(&d_suf, &d_def, &eval, &config)?;

    let mut out = Staging::begin(output_dir(&a.out, "generalized"))?;
    save_checkpoint(out.path("checkpoint.json"), &params, &config.train, None)?;
    out.write("pipeline_report.json", report.to_json()?)?;
    let target = out.commit(json!({
        "experiment": "generalized",
        "config_path": a.config.as_deref().map(display),
        "resolved_config": config,
        "datasets": [display(&a.suf), display(&a.def), display(&a.eval)],
        "seeds": [config.train.seed],
    }))?;
    println!(
        "ACER {:.4}% agreement {:?} -> {}",
        report.report.acer,
        report.agreement,
        target.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::NoiseSweep(a) => cmd_noise_sweep(a),
        Command::QualityReport(a) => cmd_quality_report(a),
        Command::Generalized(a) => cmd_generalized(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
