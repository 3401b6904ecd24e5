//! Two-stage training.
//!
//! Stage 1 trains the backbone, the live/spoof classifier, the semantic
//! classifiers and (when enabled) the label-quality head with Adam on the
//! live/spoof cross-entropy plus the semantic cross-entropies. Stage 2
//! freezes the backbone and the label-quality head and fits `omega_c` and the
//! data-quality head with plain SGD on the normalized Gaussian NLL.
//!
//! All randomness comes from ChaCha streams keyed by `(seed, stage, epoch)`,
//! so a run resumed from a checkpoint replays exactly the same batches and
//! noise draws as an uninterrupted one.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DpmError, Result};
use crate::losses::{self, Batch};
use crate::model::{Checkpoint, ModelConfig, ModelParams, ParamGroup};

/// Losses above this are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

const SHUFFLE_STREAM: u64 = 0;
const EPSILON_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub lambda_s: f64,
    pub seed: u64,
    pub enable_semantic: bool,
    pub enable_lq: bool,
    pub enable_dq: bool,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub dq_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1: StageConfig {
                optimizer: OptimizerKind::Adam,
                lr: 1e-4,
                epochs: 50,
                batch_size: 64,
            },
            stage2: StageConfig {
                optimizer: OptimizerKind::Sgd,
                lr: 1e-1,
                epochs: 50,
                batch_size: 64,
            },
            lambda_s: 1.0,
            seed: 0,
            enable_semantic: true,
            enable_lq: true,
            enable_dq: true,
            hidden: vec![64, 64],
            embed_dim: 32,
            dq_hidden: Vec::new(),
        }
    }
}

/// Keys accepted by `TrainConfig::parse`, in the order `to_text` writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "stage1.optimizer",
    "stage1.lr",
    "stage1.epochs",
    "stage1.batch_size",
    "stage2.optimizer",
    "stage2.lr",
    "stage2.epochs",
    "stage2.batch_size",
    "lambda_s",
    "seed",
    "enable_semantic",
    "enable_lq",
    "enable_dq",
    "model.hidden",
    "model.embed_dim",
    "model.dq_hidden",
];

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| DpmError::parse(line, format!("key `{key}`: {e}")))
}

fn parse_widths(line: usize, key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|w| parse_value::<usize>(line, key, w.trim()))
        .collect()
}

fn parse_optimizer(line: usize, key: &str, value: &str) -> Result<OptimizerKind> {
    match value {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(DpmError::parse(
            line,
            format!("key `{key}`: unknown optimizer {other:?}"),
        )),
    }
}

fn join_widths(w: &[usize]) -> String {
    w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if !(s.lr > 0.0 && s.lr.is_finite()) {
                return Err(DpmError::Config(format!("{name}.lr must be > 0")));
            }
            if s.epochs < 1 {
                return Err(DpmError::Config(format!("{name}.epochs must be >= 1")));
            }
            if s.batch_size < 1 {
                return Err(DpmError::Config(format!("{name}.batch_size must be >= 1")));
            }
        }
        if !(self.lambda_s >= 0.0 && self.lambda_s.is_finite()) {
            return Err(DpmError::Config("lambda_s must be finite and >= 0".into()));
        }
        if self.enable_lq && !self.enable_semantic {
            return Err(DpmError::Config(
                "enable_lq requires enable_semantic".into(),
            ));
        }
        Ok(())
    }

    /// Parses flat `key = value` text. `#` starts a comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| DpmError::parse(line, format!("expected `key = value`, found {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(DpmError::parse(line, format!("duplicate key `{key}`")));
            }
            match key {
                "stage1.optimizer" => cfg.stage1.optimizer = parse_optimizer(line, key, value)?,
                "stage1.lr" => cfg.stage1.lr = parse_value(line, key, value)?,
                "stage1.epochs" => cfg.stage1.epochs = parse_value(line, key, value)?,
                "stage1.batch_size" => cfg.stage1.batch_size = parse_value(line, key, value)?,
                "stage2.optimizer" => cfg.stage2.optimizer = parse_optimizer(line, key, value)?,
                "stage2.lr" => cfg.stage2.lr = parse_value(line, key, value)?,
                "stage2.epochs" => cfg.stage2.epochs = parse_value(line, key, value)?,
                "stage2.batch_size" => cfg.stage2.batch_size = parse_value(line, key, value)?,
                "lambda_s" => cfg.lambda_s = parse_value(line, key, value)?,
                "seed" => cfg.seed = parse_value(line, key, value)?,
                "enable_semantic" => cfg.enable_semantic = parse_value(line, key, value)?,
                "enable_lq" => cfg.enable_lq = parse_value(line, key, value)?,
                "enable_dq" => cfg.enable_dq = parse_value(line, key, value)?,
                "model.hidden" => cfg.hidden = parse_widths(line, key, value)?,
                "model.embed_dim" => cfg.embed_dim = parse_value(line, key, value)?,
                "model.dq_hidden" => cfg.dq_hidden = parse_widths(line, key, value)?,
                other => return Err(DpmError::parse(line, format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Every key with its resolved value; `parse(to_text())` gives `self` back.
    pub fn to_text(&self) -> String {
        let opt = |o: OptimizerKind| match o {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        };
        let mut s = String::new();
        let _ = writeln!(s, "stage1.optimizer = {}", opt(self.stage1.optimizer));
        let _ = writeln!(s, "stage1.lr = {:e}", self.stage1.lr);
        let _ = writeln!(s, "stage1.epochs = {}", self.stage1.epochs);
        let _ = writeln!(s, "stage1.batch_size = {}", self.stage1.batch_size);
        let _ = writeln!(s, "stage2.optimizer = {}", opt(self.stage2.optimizer));
        let _ = writeln!(s, "stage2.lr = {:e}", self.stage2.lr);
        let _ = writeln!(s, "stage2.epochs = {}", self.stage2.epochs);
        let _ = writeln!(s, "stage2.batch_size = {}", self.stage2.batch_size);
        let _ = writeln!(s, "lambda_s = {:e}", self.lambda_s);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "enable_semantic = {}", self.enable_semantic);
        let _ = writeln!(s, "enable_lq = {}", self.enable_lq);
        let _ = writeln!(s, "enable_dq = {}", self.enable_dq);
        let _ = writeln!(s, "model.hidden = {}", join_widths(&self.hidden));
        let _ = writeln!(s, "model.embed_dim = {}", self.embed_dim);
        let _ = writeln!(s, "model.dq_hidden = {}", join_widths(&self.dq_hidden));
        s
    }

    pub fn model_config(&self, ds: &Dataset) -> ModelConfig {
        ModelConfig {
            input_dim: ds.feature_dim,
            hidden: self.hidden.clone(),
            embed_dim: self.embed_dim,
            dq_hidden: self.dq_hidden.clone(),
            categories: ds.categories.clone(),
        }
    }

    fn stage1_groups(&self) -> Vec<ParamGroup> {
        let mut groups = vec![ParamGroup::Backbone, ParamGroup::OmegaC];
        if self.enable_semantic {
            groups.push(ParamGroup::OmegaS);
        }
        if self.enable_lq {
            groups.push(ParamGroup::LqHead);
        }
        groups
    }
}

/// Optimizer moments; empty for SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Where a run stopped, enough to continue it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub stage: u8,
    pub epochs_done: usize,
    pub optimizer: OptimizerState,
}

/// One Adam step on `w`; `step` counts from 1.
pub(crate) fn adam_update(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, step: u64) {
    let t = step.min(i32::MAX as u64) as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (((w, &d), m), v) in w.iter_mut().zip(g).zip(m).zip(v) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * d;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * d * d;
        *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
    }
}

struct Optimizer {
    groups: Vec<ParamGroup>,
    lr: f64,
    state: OptimizerState,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, groups: Vec<ParamGroup>, params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params
            .tensors()
            .iter()
            .filter(|t| groups.contains(&t.group))
            .map(|t| t.data.len())
            .collect();
        let (m, v) = match kind {
            OptimizerKind::Adam => (
                sizes.iter().map(|&n| vec![0.0; n]).collect(),
                sizes.iter().map(|&n| vec![0.0; n]).collect(),
            ),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Optimizer {
            groups,
            lr,
            state: OptimizerState {
                kind,
                step: 0,
                m,
                v,
            },
        }
    }

    fn resume(lr: f64, groups: Vec<ParamGroup>, params: &ModelParams, state: OptimizerState) -> Result<Self> {
        let fresh = Optimizer::new(state.kind, lr, groups, params);
        let shapes_match = fresh.state.m.len() == state.m.len()
            && fresh
                .state
                .m
                .iter()
                .zip(&state.m)
                .all(|(a, b)| a.len() == b.len());
        if !shapes_match {
            return Err(DpmError::Checkpoint(
                "optimizer state does not match the parameter groups".into(),
            ));
        }
        Ok(Optimizer { state, ..fresh })
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.state.step += 1;
        let t = self.state.step;
        let grads = grads.tensors();
        let mut slot = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads) {
            if !self.groups.contains(&p.group) {
                continue;
            }
            match self.state.kind {
                OptimizerKind::Sgd => {
                    for (w, &d) in p.data.iter_mut().zip(g.data) {
                        *w -= self.lr * d;
                    }
                }
                OptimizerKind::Adam => adam_update(
                    p.data,
                    g.data,
                    &mut self.state.m[slot],
                    &mut self.state.v[slot],
                    self.lr,
                    t,
                ),
            }
            slot += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub loss: f64,
    pub components: BTreeMap<String, f64>,
    pub mean_sigma_l: Option<f64>,
    pub mean_sigma_d_sq: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn extend(&mut self, other: TrainLog) {
        self.epochs.extend(other.epochs);
    }

    pub fn last(&self, stage: u8) -> Option<&EpochRecord> {
        self.epochs.iter().rev().find(|r| r.stage == stage)
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Result of running (part of) one stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub params: ModelParams,
    pub log: TrainLog,
    pub state: TrainState,
}

fn epoch_rng(seed: u64, stage: u8, epoch: usize, kind: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 48) | ((epoch as u64) << 8) | kind);
    rng
}

fn check_finite(stage: u8, epoch: usize, total: f64, components: &BTreeMap<String, f64>) -> Result<()> {
    if total.is_finite() && total.abs() <= DIVERGENCE_LIMIT {
        return Ok(());
    }
    let mut desc = format!("loss={total}");
    for (k, v) in components {
        let _ = write!(desc, " {k}={v}");
    }
    Err(DpmError::Divergence {
        stage,
        epoch,
        components: desc,
    })
}

fn check_dataset(ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(DpmError::EmptyDataset);
    }
    ds.validate()
}

/// Accuracy of the plain softmax classifier against the dataset labels.
fn train_accuracy(params: &ModelParams, mu: &Array2<f64>, c: &[u8]) -> f64 {
    let logits = mu.dot(&params.omega_c.t());
    let correct = logits
        .rows()
        .into_iter()
        .zip(c)
        .filter(|(row, &label)| u8::from(row[1] >= row[0]) == label)
        .count();
    correct as f64 / c.len() as f64
}

/// Stage 1 from scratch with the configured number of epochs.
pub fn train_stage1_lq(ds: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let out = run_stage1(ds, config, None, config.stage1.epochs)?;
    Ok((out.params, out.log))
}

/// Runs stage 1 up to `until_epoch` epochs in total, optionally continuing
/// from a saved state.
pub fn run_stage1(
    ds: &Dataset,
    config: &TrainConfig,
    resume: Option<(ModelParams, TrainState)>,
    until_epoch: usize,
) -> Result<StageOutcome> {
    config.validate()?;
    check_dataset(ds)?;
    if config.enable_semantic && ds.categories.is_empty() {
        return Err(DpmError::Config(
            "semantic supervision needs at least one semantic category".into(),
        ));
    }
    let model_config = config.model_config(ds);
    let groups = config.stage1_groups();
    let (mut params, mut optimizer, start) = match resume {
        None => {
            let params = ModelParams::init(model_config, config.seed)?;
            let opt = Optimizer::new(config.stage1.optimizer, config.stage1.lr, groups, &params);
            (params, opt, 0)
        }
        Some((params, state)) => {
            if state.stage != 1 {
                return Err(DpmError::Checkpoint(format!(
                    "cannot resume stage 1 from a stage {} state",
                    state.stage
                )));
            }
            if params.config != model_config {
                return Err(DpmError::Checkpoint(
                    "checkpoint model does not match dataset and config".into(),
                ));
            }
            let opt = Optimizer::resume(config.stage1.lr, groups, &params, state.optimizer)?;
            (params, opt, state.epochs_done)
        }
    };

    let lambda = if config.enable_semantic { config.lambda_s } else { 0.0 };
    let n = ds.len();
    let b = config.embed_dim;
    let full = Batch::full(ds);
    let mut log = TrainLog::default();
    for epoch in start..until_epoch {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_rng(config.seed, 1, epoch, SHUFFLE_STREAM));
        let mut eps_rng = epoch_rng(config.seed, 1, epoch, EPSILON_STREAM);

        let mut sum = 0.0;
        let mut comp_sum: BTreeMap<String, f64> = BTreeMap::new();
        for chunk in order.chunks(config.stage1.batch_size) {
            let batch = Batch {
                x: full.x.select(Axis(0), chunk),
                c: chunk.iter().map(|&i| full.c[i]).collect(),
                semantic: full
                    .semantic
                    .iter()
                    .map(|(k, v)| (k.clone(), chunk.iter().map(|&i| v[i]).collect()))
                    .collect(),
            };
            let eps = config.enable_lq.then(|| {
                Array2::from_shape_simple_fn((chunk.len(), b), || {
                    eps_rng.sample::<f64, _>(StandardNormal)
                })
            });
            let obj = losses::stage1_objective_grad(&params, &batch, eps.as_ref().map(|e| e.view()), lambda)?;
            check_finite(1, epoch, obj.value.total, &obj.components)?;
            let w = chunk.len() as f64 / n as f64;
            sum += w * obj.value.total;
            for (k, v) in &obj.components {
                *comp_sum.entry(k.clone()).or_default() += w * v;
            }
            optimizer.step(&mut params, obj.grads.as_ref().expect("gradient requested"));
        }
        if !params.is_finite() {
            return Err(DpmError::Divergence {
                stage: 1,
                epoch,
                components: "non-finite parameters".into(),
            });
        }
        let snapshot = params.forward_all(full.x.view())?;
        log.epochs.push(EpochRecord {
            stage: 1,
            epoch,
            loss: sum,
            components: comp_sum,
            mean_sigma_l: config
                .enable_lq
                .then(|| snapshot.sigma_l.as_ref().and_then(|s| s.mean()).unwrap_or(1.0)),
            mean_sigma_d_sq: snapshot
                .sigma_d_sq
                .as_ref()
                .and_then(|s| s.mean())
                .unwrap_or(1.0),
            train_accuracy: train_accuracy(&params, &snapshot.mu, &full.c),
        });
    }
    Ok(StageOutcome {
        params,
        log,
        state: TrainState {
            stage: 1,
            epochs_done: until_epoch.max(start),
            optimizer: optimizer.state,
        },
    })
}

/// Stage 2 on top of stage-1 parameters with the configured number of epochs.
pub fn train_stage2_dq(
    params: &ModelParams,
    ds: &Dataset,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    let out = run_stage2(params, ds, config, None, config.stage2.epochs)?;
    Ok((out.params, out.log))
}

pub fn run_stage2(
    params: &ModelParams,
    ds: &Dataset,
    config: &TrainConfig,
    resume: Option<TrainState>,
    until_epoch: usize,
) -> Result<StageOutcome> {
    config.validate()?;
    check_dataset(ds)?;
    if params.config.input_dim != ds.feature_dim {
        return Err(DpmError::shape("stage-2 features", params.config.input_dim, ds.feature_dim));
    }
    let groups = vec![ParamGroup::OmegaC, ParamGroup::DqHead];
    let mut params = params.clone();
    let (mut optimizer, start) = match resume {
        None => (
            Optimizer::new(config.stage2.optimizer, config.stage2.lr, groups, &params),
            0,
        ),
        Some(state) => {
            if state.stage != 2 {
                return Err(DpmError::Checkpoint(format!(
                    "cannot resume stage 2 from a stage {} state",
                    state.stage
                )));
            }
            let epochs_done = state.epochs_done;
            (
                Optimizer::resume(config.stage2.lr, groups, &params, state.optimizer)?,
                epochs_done,
            )
        }
    };

    // the backbone is frozen, so embeddings are computed once
    let full = Batch::full(ds);
    let mu = params.embed(full.x.view())?;
    let n = ds.len();
    let mut log = TrainLog::default();
    for epoch in start..until_epoch {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_rng(config.seed, 2, epoch, SHUFFLE_STREAM));
        let mut sum = 0.0;
        for chunk in order.chunks(config.stage2.batch_size) {
            let mu_b = mu.select(Axis(0), chunk);
            let c_b: Vec<u8> = chunk.iter().map(|&i| full.c[i]).collect();
            let obj = losses::stage2_objective_from_embedding_grad(&params, mu_b.view(), &c_b)?;
            check_finite(2, epoch, obj.value.total, &obj.components)?;
            sum += chunk.len() as f64 / n as f64 * obj.value.total;
            optimizer.step(&mut params, obj.grads.as_ref().expect("gradient requested"));
        }
        if !params.is_finite() {
            return Err(DpmError::Divergence {
                stage: 2,
                epoch,
                components: "non-finite parameters".into(),
            });
        }
        let var: Array1<f64> = params.dq_variance(mu.view())?;
        let (preds, _) = crate::inference::predict_batch(&params, full.x.view(), true)?;
        let correct = preds
            .iter()
            .zip(&full.c)
            .filter(|(p, &c)| p.predicted_class == c)
            .count();
        let mut components = BTreeMap::new();
        components.insert("dq_nll".to_string(), sum);
        log.epochs.push(EpochRecord {
            stage: 2,
            epoch,
            loss: sum,
            components,
            mean_sigma_l: None,
            mean_sigma_d_sq: var.mean().unwrap_or(1.0),
            train_accuracy: correct as f64 / n as f64,
        });
    }
    Ok(StageOutcome {
        params,
        log,
        state: TrainState {
            stage: 2,
            epochs_done: until_epoch.max(start),
            optimizer: optimizer.state,
        },
    })
}

/// Stage 1, then stage 2 when `enable_dq` is set.
pub fn train_full_dpm(ds: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainLog)> {
    let (params, mut log) = train_stage1_lq(ds, config)?;
    if !config.enable_dq {
        return Ok((params, log));
    }
    let (params, log2) = train_stage2_dq(&params, ds, config)?;
    log.extend(log2);
    Ok((params, log))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    config: &TrainConfig,
    state: Option<&TrainState>,
) -> Result<()> {
    let mut ckpt = Checkpoint::new(params, config);
    ckpt.state = state.cloned();
    ckpt.save(path)
}

/// Loads a checkpoint; with `expected` the stored shapes must match it.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<(ModelParams, TrainConfig, Option<TrainState>)> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(expected) = expected {
        ckpt.validate_against(expected)?;
    }
    let params = ckpt.to_params()?;
    Ok((params, ckpt.train_config, ckpt.state))
}
