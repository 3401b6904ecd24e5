//! Anti-spoofing error rates and ROC utilities.
//!
//! Live is the positive class. A sample is accepted as live when
//! `p_live >= threshold`, so FPR is the spoof acceptance rate (APCER as a
//! fraction) and TPR is one minus the live rejection rate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::LIVE;
use crate::error::{DpmError, Result};
use crate::inference::PredictionRecord;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_FPR_TARGETS: [f64; 3] = [0.01, 0.005, 0.001];

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(DpmError::shape("metric labels", scores.len(), labels.len()));
    }
    let n_live = labels.iter().filter(|&&c| c == LIVE).count();
    let n_spoof = labels.len() - n_live;
    if n_live == 0 {
        return Err(DpmError::UndefinedMetric("no live samples".into()));
    }
    if n_spoof == 0 {
        return Err(DpmError::UndefinedMetric("no spoof samples".into()));
    }
    Ok((n_live, n_spoof))
}

fn percent(count: usize, total: usize) -> f64 {
    (100 * count) as f64 / total as f64
}

/// Percentage of spoof samples accepted as live.
pub fn apcer(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (_, n_spoof) = check_inputs(scores, labels)?;
    let accepted = scores
        .iter()
        .zip(labels)
        .filter(|(&p, &c)| c != LIVE && p >= threshold)
        .count();
    Ok(percent(accepted, n_spoof))
}

/// Percentage of live samples rejected.
pub fn bpcer(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (n_live, _) = check_inputs(scores, labels)?;
    let rejected = scores
        .iter()
        .zip(labels)
        .filter(|(&p, &c)| c == LIVE && p < threshold)
        .count();
    Ok(percent(rejected, n_live))
}

pub fn acer(apcer: f64, bpcer: f64) -> f64 {
    (apcer + bpcer) / 2.0
}

/// `(FAR + FRR) / 2`, which under the live-positive convention is the ACER
/// at the same threshold.
pub fn hter(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let far = apcer(scores, labels, threshold)?;
    let frr = bpcer(scores, labels, threshold)?;
    Ok((far + frr) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points ordered by decreasing threshold: `+inf`, each distinct score,
/// then `-inf`.
pub fn roc_sweep(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (n_live, n_spoof) = check_inputs(scores, labels)?;
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(DpmError::UndefinedMetric(format!("score {s} is not a number")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == LIVE {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / n_spoof as f64,
            tpr: tp as f64 / n_live as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(points)
}

/// Trapezoidal area under an ROC produced by `roc_sweep`.
pub fn roc_auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr_target: f64,
    pub tpr: f64,
    pub threshold: f64,
    pub fpr: f64,
    /// The spoof set is too small to resolve `fpr_target`; only FPR 0 qualifies.
    pub unattainable: bool,
}

/// Best TPR over thresholds whose FPR stays within `fpr_target`; among equal
/// TPRs the highest threshold wins.
pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], fpr_target: f64) -> Result<TprAtFpr> {
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(DpmError::Config(format!(
            "FPR target {fpr_target} must lie in (0, 1)"
        )));
    }
    let (_, n_spoof) = check_inputs(scores, labels)?;
    let roc = roc_sweep(scores, labels)?;
    Ok(tpr_at_fpr_from_roc(&roc, n_spoof, fpr_target))
}

fn tpr_at_fpr_from_roc(roc: &[RocPoint], n_spoof: usize, fpr_target: f64) -> TprAtFpr {
    let mut best = roc[0];
    for p in roc.iter().filter(|p| p.fpr <= fpr_target) {
        if p.tpr > best.tpr {
            best = *p;
        }
    }
    TprAtFpr {
        fpr_target,
        tpr: best.tpr,
        threshold: best.threshold,
        fpr: best.fpr,
        unattainable: (n_spoof as f64) * fpr_target < 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub hter: f64,
    pub auc: f64,
    pub tpr_at_fpr: Vec<TprAtFpr>,
    pub roc: Vec<RocPoint>,
    pub threshold_used: f64,
    pub n_live: usize,
    pub n_spoof: usize,
    pub warnings: Vec<String>,
}

pub fn evaluate(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
    fpr_targets: &[f64],
) -> Result<EvalReport> {
    let (n_live, n_spoof) = check_inputs(scores, labels)?;
    let a = apcer(scores, labels, threshold)?;
    let b = bpcer(scores, labels, threshold)?;
    let roc = roc_sweep(scores, labels)?;
    let mut warnings = Vec::new();
    let mut tprs = Vec::with_capacity(fpr_targets.len());
    for &target in fpr_targets {
        if !(target > 0.0 && target < 1.0) {
            return Err(DpmError::Config(format!("FPR target {target} must lie in (0, 1)")));
        }
        let t = tpr_at_fpr_from_roc(&roc, n_spoof, target);
        if t.unattainable {
            warnings.push(format!(
                "TPR@FPR={target}: {n_spoof} spoof samples cannot resolve this rate"
            ));
        }
        tprs.push(t);
    }
    Ok(EvalReport {
        apcer: a,
        bpcer: b,
        acer: acer(a, b),
        hter: hter(scores, labels, threshold)?,
        auc: roc_auc(&roc),
        tpr_at_fpr: tprs,
        roc,
        threshold_used: threshold,
        n_live,
        n_spoof,
        warnings,
    })
}

pub fn evaluate_records(
    records: &[PredictionRecord],
    threshold: f64,
    fpr_targets: &[f64],
) -> Result<EvalReport> {
    let scores: Vec<f64> = records.iter().map(|r| r.p_live).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    evaluate(&scores, &labels, threshold, fpr_targets)
}

/// Corrected minus uncorrected rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub hter: f64,
    pub auc: f64,
}

impl EvalReport {
    pub fn delta_from(&self, base: &EvalReport) -> ReportDelta {
        ReportDelta {
            apcer: self.apcer - base.apcer,
            bpcer: self.bpcer - base.bpcer,
            acer: self.acer - base.acer,
            hter: self.hter - base.hter,
            auc: self.auc - base.auc,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&ReportJson::from(self))?;
        s.push('\n');
        Ok(s)
    }

    /// The document `to_json` writes, for embedding in larger reports.
    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(ReportJson::from(self))?)
    }

    pub fn csv_header() -> &'static str {
        "apcer,bpcer,acer,hter,auc,threshold,n_live,n_spoof"
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.apcer,
            self.bpcer,
            self.acer,
            self.hter,
            self.auc,
            self.threshold_used,
            self.n_live,
            self.n_spoof
        );
        s
    }
}

/// JSON view with the infinite ROC sentinels written as strings.
#[derive(Serialize)]
struct ReportJson<'a> {
    apcer: f64,
    bpcer: f64,
    acer: f64,
    hter: f64,
    auc: f64,
    tpr_at_fpr: &'a [TprAtFpr],
    roc: Vec<(serde_json::Value, f64, f64)>,
    threshold_used: f64,
    n_live: usize,
    n_spoof: usize,
    warnings: &'a [String],
}

impl<'a> From<&'a EvalReport> for ReportJson<'a> {
    fn from(r: &'a EvalReport) -> Self {
        let thr = |t: f64| {
            if t.is_finite() {
                serde_json::Value::from(t)
            } else if t > 0.0 {
                serde_json::Value::from("+inf")
            } else {
                serde_json::Value::from("-inf")
            }
        };
        ReportJson {
            apcer: r.apcer,
            bpcer: r.bpcer,
            acer: r.acer,
            hter: r.hter,
            auc: r.auc,
            tpr_at_fpr: &r.tpr_at_fpr,
            roc: r.roc.iter().map(|p| (thr(p.threshold), p.fpr, p.tpr)).collect(),
            threshold_used: r.threshold_used,
            n_live: r.n_live,
            n_spoof: r.n_spoof,
            warnings: &r.warnings,
        }
    }
}
