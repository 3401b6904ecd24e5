//! Self-labeling pipeline for datasets without semantic annotations.
//!
//! A tagger trained on a label-sufficient dataset predicts semantic labels
//! for a label-deficient one; the full two-stage model is then trained on
//! those self-distributed labels. Original annotations of the deficient set,
//! when present, are kept aside only to measure how often the tagger agrees.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{category_applies, inject_semantic_label_noise, Dataset};
use crate::error::{DpmError, Result};
use crate::experiment::{evaluate_params, Arm};
use crate::losses::softmax_cross_entropy;
use crate::metrics::EvalReport;
use crate::model::{Linear, Mlp, ModelParams};
use crate::training::{adam_update, train_full_dpm, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Share of the label-sufficient set held out to measure tagger accuracy.
    pub holdout_fraction: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            hidden: vec![32],
            lr: 1e-2,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.epochs < 1 || self.batch_size < 1 {
            return Err(DpmError::Config(
                "tagger needs lr > 0, epochs >= 1 and batch_size >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(DpmError::Config("tagger holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Anything that assigns one semantic label per feature row.
pub trait SemanticTagger {
    fn category(&self) -> &str;
    fn cardinality(&self) -> usize;
    fn tag(&self, x: ArrayView2<f64>) -> Result<Vec<usize>>;
}

/// MLP classifier for one semantic category.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub category: String,
    pub cardinality: usize,
    pub net: Mlp,
}

impl TaggerModel {
    /// Rows sum to one.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let input = self.net.layers[0].input_dim();
        if x.ncols() != input {
            return Err(DpmError::shape("tagger input", input, x.ncols()));
        }
        let mut p = self.net.forward(x);
        for mut row in p.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        Ok(p)
    }
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    // first maximum wins
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl SemanticTagger for TaggerModel {
    fn category(&self) -> &str {
        &self.category
    }

    fn cardinality(&self) -> usize {
        self.cardinality
    }

    fn tag(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.rows().into_iter().map(argmax).collect())
    }
}

/// Returns the labels stored for exactly matching feature vectors.
///
/// Stands in for a perfect tagger on data it was built from.
#[derive(Debug, Clone)]
pub struct LookupTagger {
    category: String,
    cardinality: usize,
    table: HashMap<Vec<u64>, usize>,
}

impl LookupTagger {
    pub fn from_dataset(ds: &Dataset, category: &str) -> Result<Self> {
        let cardinality = *ds
            .categories
            .get(category)
            .ok_or_else(|| DpmError::Config(format!("unknown category {category:?}")))?;
        let table = ds
            .samples
            .iter()
            .filter_map(|s| {
                s.s.get(category)
                    .map(|&l| (s.x.iter().map(|v| v.to_bits()).collect(), l))
            })
            .collect();
        Ok(LookupTagger {
            category: category.to_string(),
            cardinality,
            table,
        })
    }
}

impl SemanticTagger for LookupTagger {
    fn category(&self) -> &str {
        &self.category
    }

    fn cardinality(&self) -> usize {
        self.cardinality
    }

    fn tag(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        x.rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
                self.table.get(&key).copied().ok_or_else(|| {
                    DpmError::Config(format!("lookup tagger has no entry for row {i}"))
                })
            })
            .collect()
    }
}

fn labeled_rows(ds: &Dataset, indices: &[usize], category: &str) -> (Array2<f64>, Vec<usize>) {
    let rows: Vec<(usize, usize)> = indices
        .iter()
        .filter_map(|&i| ds.samples[i].s.get(category).map(|&l| (i, l)))
        .collect();
    let mut x = Array2::zeros((rows.len(), ds.feature_dim));
    for (r, &(i, _)) in rows.iter().enumerate() {
        x.row_mut(r)
            .iter_mut()
            .zip(&ds.samples[i].x)
            .for_each(|(o, v)| *o = *v);
    }
    (x, rows.into_iter().map(|(_, l)| l).collect())
}

fn tagger_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TAGGER_INIT_STREAM: u64 = 1 << 40;
const TAGGER_SPLIT_STREAM: u64 = (1 << 40) + 1;

fn train_on_rows(
    ds: &Dataset,
    indices: &[usize],
    category: &str,
    config: &TaggerConfig,
) -> Result<TaggerModel> {
    config.validate()?;
    let cardinality = *ds
        .categories
        .get(category)
        .ok_or_else(|| DpmError::Config(format!("dataset has no category {category:?}")))?;
    let (x, labels) = labeled_rows(ds, indices, category);
    let mut seen = labels.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(DpmError::Config(format!(
            "category {category:?} has {} distinct label(s) in the training rows; a tagger needs at least 2",
            seen.len()
        )));
    }

    let mut widths = vec![ds.feature_dim];
    widths.extend(&config.hidden);
    widths.push(cardinality);
    let mut net = Mlp::random(&widths, &mut tagger_rng(config.seed, TAGGER_INIT_STREAM));
    let sizes: Vec<(usize, usize)> = net
        .layers
        .iter()
        .flat_map(|l| [l.weight.len(), l.bias.len()])
        .map(|n| (n, n))
        .collect();
    let mut m: Vec<Vec<f64>> = sizes.iter().map(|&(n, _)| vec![0.0; n]).collect();
    let mut v: Vec<Vec<f64>> = sizes.iter().map(|&(_, n)| vec![0.0; n]).collect();
    let mut step = 0u64;

    let n = labels.len();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut tagger_rng(config.seed, epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let cache = net.forward_cached(xb.view());
            let (_, d_logits) = softmax_cross_entropy(cache.output().view(), &yb);
            let mut grad = Mlp {
                layers: net
                    .layers
                    .iter()
                    .map(|l| Linear::zeros(l.input_dim(), l.output_dim()))
                    .collect(),
            };
            net.backward(&cache, d_logits.view(), &mut grad);
            step += 1;
            let mut slot = 0;
            for (layer, g) in net.layers.iter_mut().zip(&grad.layers) {
                let w = layer.weight.as_slice_mut().expect("standard layout");
                adam_update(w, g.weight.as_slice().expect("standard layout"), &mut m[slot], &mut v[slot], config.lr, step);
                let b = layer.bias.as_slice_mut().expect("standard layout");
                adam_update(b, g.bias.as_slice().expect("standard layout"), &mut m[slot + 1], &mut v[slot + 1], config.lr, step);
                slot += 2;
            }
        }
    }
    Ok(TaggerModel {
        category: category.to_string(),
        cardinality,
        net,
    })
}

/// Supervised training of a classifier for `category` on every labeled row of `d_suf`.
pub fn train_tagger(d_suf: &Dataset, category: &str, config: &TaggerConfig) -> Result<TaggerModel> {
    train_on_rows(d_suf, &(0..d_suf.len()).collect::<Vec<_>>(), category, config)
}

/// Seeded split of `ds` into (train, held-out) indices.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut tagger_rng(seed, TAGGER_SPLIT_STREAM));
    let held = ((fraction * n as f64) + 0.5).floor() as usize;
    let mut test = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Trains on the non-held-out part of `d_suf` and reports accuracy on the rest.
/// Accuracy is `None` when the held-out part has no labeled rows.
pub fn train_tagger_with_holdout(
    d_suf: &Dataset,
    category: &str,
    config: &TaggerConfig,
) -> Result<(TaggerModel, Option<f64>)> {
    let (train, test) = holdout_split(d_suf.len(), config.holdout_fraction, config.seed);
    let model = train_on_rows(d_suf, &train, category, config)?;
    let (x, labels) = labeled_rows(d_suf, &test, category);
    if labels.is_empty() {
        return Ok((model, None));
    }
    let predicted = model.tag(x.view())?;
    let correct = predicted.iter().zip(&labels).filter(|(a, b)| a == b).count();
    Ok((model, Some(correct as f64 / labels.len() as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Sufficient,
    Deficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelProvenance {
    Annotated,
    SelfDistributed,
}

/// A dataset whose semantic labels carry a provenance per category.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfLabeled {
    pub dataset: Dataset,
    pub role: DatasetRole,
    pub provenance: BTreeMap<String, LabelProvenance>,
    /// Annotations replaced by the tagger, kept for agreement analysis.
    pub replaced: BTreeMap<String, Vec<Option<usize>>>,
}

impl SelfLabeled {
    pub fn annotated(dataset: Dataset, role: DatasetRole) -> Self {
        let provenance = dataset
            .categories
            .keys()
            .map(|k| (k.clone(), LabelProvenance::Annotated))
            .collect();
        SelfLabeled {
            dataset,
            role,
            provenance,
            replaced: BTreeMap::new(),
        }
    }

    /// Replaces the tagger's category with its predictions on every sample the
    /// category applies to. Features and live/spoof labels are untouched.
    pub fn apply(&mut self, tagger: &dyn SemanticTagger) -> Result<()> {
        let category = tagger.category().to_string();
        match self.dataset.categories.get(&category) {
            Some(&card) if card == tagger.cardinality() => {}
            Some(&card) => {
                return Err(DpmError::Config(format!(
                    "tagger for {category:?} has {} classes, dataset declares {card}",
                    tagger.cardinality()
                )))
            }
            None => return Err(DpmError::Config(format!("dataset has no category {category:?}"))),
        }
        let rows: Vec<usize> = (0..self.dataset.len())
            .filter(|&i| category_applies(&category, self.dataset.samples[i].c))
            .collect();
        let mut x = Array2::zeros((rows.len(), self.dataset.feature_dim));
        for (r, &i) in rows.iter().enumerate() {
            x.row_mut(r)
                .iter_mut()
                .zip(&self.dataset.samples[i].x)
                .for_each(|(o, v)| *o = *v);
        }
        let tags = tagger.tag(x.view())?;
        if tags.len() != rows.len() {
            return Err(DpmError::shape("tagger output", rows.len(), tags.len()));
        }
        if let Some((row, &label)) = tags.iter().enumerate().find(|(_, &l)| l >= tagger.cardinality()) {
            return Err(DpmError::LabelOutOfRange {
                row,
                label,
                num_classes: tagger.cardinality(),
            });
        }
        let original = self.dataset.semantic_labels(&category);
        for s in self.dataset.samples.iter_mut() {
            s.s.remove(&category);
        }
        for (&i, &label) in rows.iter().zip(&tags) {
            self.dataset.samples[i].s.insert(category.clone(), label);
        }
        self.replaced.entry(category.clone()).or_insert(original);
        self.provenance.insert(category, LabelProvenance::SelfDistributed);
        Ok(())
    }

    /// Fraction of self-distributed labels equal to the replaced annotation,
    /// over samples that had both. `None` if there is nothing to compare.
    pub fn agreement(&self, category: &str) -> Option<f64> {
        let original = self.replaced.get(category)?;
        let current = self.dataset.semantic_labels(category);
        let (mut both, mut equal) = (0usize, 0usize);
        for (a, b) in original.iter().zip(&current) {
            if let (Some(a), Some(b)) = (a, b) {
                both += 1;
                equal += usize::from(a == b);
            }
        }
        (both > 0).then(|| equal as f64 / both as f64)
    }
}

/// Tags `d_def` with one tagger; other categories keep their annotations.
pub fn self_label(tagger: &dyn SemanticTagger, d_def: &Dataset) -> Result<SelfLabeled> {
    let mut out = SelfLabeled::annotated(d_def.clone(), DatasetRole::Deficient);
    out.apply(tagger)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub tagger: TaggerConfig,
    pub threshold: f64,
    /// Share of self-distributed spoof-type labels re-drawn after tagging.
    pub semantic_noise_fraction: f64,
    /// Also train and evaluate all four ablation arms.
    pub four_arm: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            tagger: TaggerConfig::default(),
            threshold: crate::metrics::DEFAULT_THRESHOLD,
            semantic_noise_fraction: 0.0,
            four_arm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmReport {
    pub arm: Arm,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Held-out accuracy on the label-sufficient set, per tagged category.
    pub tagger_accuracy: BTreeMap<String, Option<f64>>,
    pub agreement: BTreeMap<String, Option<f64>>,
    pub provenance: BTreeMap<String, LabelProvenance>,
    pub semantic_noise_fraction: f64,
    pub report: EvalReport,
    pub arms: Vec<ArmReport>,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        let arms = self
            .arms
            .iter()
            .map(|a| {
                Ok(serde_json::json!({
                    "arm": a.arm.name(),
                    "report": a.report.to_json_value()?,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = serde_json::json!({
            "tagger_accuracy": self.tagger_accuracy,
            "agreement": self.agreement,
            "provenance": self.provenance,
            "semantic_noise_fraction": self.semantic_noise_fraction,
            "report": self.report.to_json_value()?,
            "arms": arms,
        });
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }
}

fn check_schema(d_suf: &Dataset, other: &Dataset, what: &str) -> Result<()> {
    if other.feature_dim != d_suf.feature_dim {
        return Err(DpmError::shape("feature dimension", d_suf.feature_dim, other.feature_dim));
    }
    if other.categories != d_suf.categories {
        return Err(DpmError::Config(format!(
            "{what} categories {:?} differ from the label-sufficient set {:?}",
            other.categories, d_suf.categories
        )));
    }
    Ok(())
}

/// Trains a tagger per category of `d_suf`, self-labels `d_def`, trains on it
/// and evaluates on `eval`.
pub fn run_generalized_pipeline(
    d_suf: &Dataset,
    d_def: &Dataset,
    eval: &Dataset,
    config: &PipelineConfig,
) -> Result<(ModelParams, PipelineReport)> {
    check_schema(d_suf, d_def, "label-deficient set")?;
    let mut taggers: Vec<Box<dyn SemanticTagger>> = Vec::new();
    let mut accuracy = BTreeMap::new();
    for category in d_suf.categories.keys() {
        let (model, acc) = train_tagger_with_holdout(d_suf, category, &config.tagger)?;
        accuracy.insert(category.clone(), acc);
        taggers.push(Box::new(model));
    }
    let refs: Vec<&dyn SemanticTagger> = taggers.iter().map(|t| t.as_ref()).collect();
    let (params, mut report) = run_pipeline_with_taggers(&refs, d_def, eval, config)?;
    report.tagger_accuracy = accuracy;
    Ok((params, report))
}

/// The pipeline after tagger training, for any set of taggers.
pub fn run_pipeline_with_taggers(
    taggers: &[&dyn SemanticTagger],
    d_def: &Dataset,
    eval: &Dataset,
    config: &PipelineConfig,
) -> Result<(ModelParams, PipelineReport)> {
    if eval.feature_dim != d_def.feature_dim {
        return Err(DpmError::shape("evaluation feature dimension", d_def.feature_dim, eval.feature_dim));
    }
    let mut labeled = SelfLabeled::annotated(d_def.clone(), DatasetRole::Deficient);
    for tagger in taggers {
        labeled.apply(*tagger)?;
    }
    let agreement = labeled
        .replaced
        .keys()
        .map(|k| (k.clone(), labeled.agreement(k)))
        .collect();
    let train_set = if config.semantic_noise_fraction > 0.0 {
        inject_semantic_label_noise(
            &labeled.dataset,
            config.semantic_noise_fraction,
            config.train.seed ^ 0x5e1f_0000_0000_0000,
        )?
    } else {
        labeled.dataset.clone()
    };

    let (params, _) = train_full_dpm(&train_set, &config.train)?;
    let report = evaluate_params(&params, eval, config.train.enable_dq, config.threshold)?;
    let mut arms = Vec::new();
    if config.four_arm {
        for arm in Arm::ALL {
            let arm_config = arm.apply(&config.train);
            let arm_report = if arm_config == config.train && arm.corrected() == config.train.enable_dq {
                report.clone()
            } else {
                let (p, _) = train_full_dpm(&train_set, &arm_config)?;
                evaluate_params(&p, eval, arm.corrected(), config.threshold)?
            };
            arms.push(ArmReport {
                arm,
                report: arm_report,
            });
        }
    }
    Ok((
        params,
        PipelineReport {
            tagger_accuracy: BTreeMap::new(),
            agreement,
            provenance: labeled.provenance,
            semantic_noise_fraction: config.semantic_noise_fraction,
            report,
            arms,
        },
    ))
}
