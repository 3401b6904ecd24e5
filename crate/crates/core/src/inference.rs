//! Live/spoof prediction with and without data-quality confidence correction.
//!
//! The corrected path replaces each class score `exp(omega_c · mu)` with
//! `exp(-|omega_c - mu|^2 / (2 sigma_D^2))`. A large `sigma_D^2` shrinks the
//! gap between classes, so low-quality inputs get damped confidences while
//! the predicted class stays the same.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{io_fmt_real, Dataset, LIVE};
use crate::error::{DpmError, Result};
use crate::losses::l2_normalize_rows;
use crate::model::{EmbeddingBatch, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `[p_spoof, p_live]`.
    pub probs: [f64; 2],
    pub predicted_class: u8,
    /// `sigma_D^2` of the sample; larger means lower quality.
    pub quality: f64,
    pub corrected: bool,
}

impl Prediction {
    pub fn p_live(&self) -> f64 {
        self.probs[LIVE as usize]
    }

    pub fn confidence(&self) -> f64 {
        self.probs[self.predicted_class as usize]
    }

    fn from_scores(scores: [f64; 2], quality: f64, corrected: bool) -> Self {
        let max = scores[0].max(scores[1]);
        let e0 = (scores[0] - max).exp();
        let e1 = (scores[1] - max).exp();
        let p_live = e1 / (e0 + e1);
        let probs = [1.0 - p_live, p_live];
        // ties go to live, matching the `p_live >= threshold` decision rule at 0.5
        let predicted_class = if probs[1] >= probs[0] { 1 } else { 0 };
        Prediction {
            probs,
            predicted_class,
            quality,
            corrected,
        }
    }
}

fn check_classifier(mu_row: &ArrayView1<f64>, omega_c: &ArrayView2<f64>) -> Result<()> {
    if omega_c.nrows() != 2 {
        return Err(DpmError::shape("omega_C rows", 2, omega_c.nrows()));
    }
    if omega_c.ncols() != mu_row.len() {
        return Err(DpmError::shape("embedding width", omega_c.ncols(), mu_row.len()));
    }
    Ok(())
}

/// Softmax of `omega_C · mu`. Quality is reported as the unit prior variance.
pub fn standard_confidence(mu_row: ArrayView1<f64>, omega_c: ArrayView2<f64>) -> Result<Prediction> {
    check_classifier(&mu_row, &omega_c)?;
    let scores = [omega_c.row(0).dot(&mu_row), omega_c.row(1).dot(&mu_row)];
    Ok(Prediction::from_scores(scores, 1.0, false))
}

/// Softmax over classes of `-|omega_c - mu|^2 / (2 sigma_D^2)`.
///
/// Inputs are used as given; callers pass the normalized stage-2 embedding
/// and prototypes.
pub fn corrected_confidence(
    mu_row: ArrayView1<f64>,
    omega_c: ArrayView2<f64>,
    sigma_d_sq: f64,
) -> Result<Prediction> {
    check_classifier(&mu_row, &omega_c)?;
    if !(sigma_d_sq > 0.0) {
        return Err(DpmError::NonPositiveVariance {
            row: 0,
            value: sigma_d_sq,
        });
    }
    let score = |k: usize| {
        let d = &omega_c.row(k) - &mu_row;
        -d.dot(&d) / (2.0 * sigma_d_sq)
    };
    Ok(Prediction::from_scores([score(0), score(1)], sigma_d_sq, true))
}

/// Predictions for every row of `x` plus the exported embedding batch.
pub fn predict_batch(
    params: &ModelParams,
    x: ArrayView2<f64>,
    corrected: bool,
) -> Result<(Vec<Prediction>, EmbeddingBatch)> {
    let batch = params.forward_all(x)?;
    let quality = batch
        .sigma_d_sq
        .clone()
        .expect("forward_all fills sigma_D^2");
    let preds = if corrected {
        let mu_hat = l2_normalize_rows(batch.mu.view())?;
        let omega_hat = l2_normalize_rows(params.omega_c.view())?;
        mu_hat
            .rows()
            .into_iter()
            .zip(quality.iter())
            .map(|(row, &q)| corrected_confidence(row, omega_hat.view(), q))
            .collect::<Result<Vec<_>>>()?
    } else {
        batch
            .mu
            .rows()
            .into_iter()
            .zip(quality.iter())
            .map(|(row, &q)| {
                standard_confidence(row, params.omega_c.view()).map(|mut p| {
                    p.quality = q;
                    p
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok((preds, batch))
}

/// One line of a prediction dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: usize,
    pub p_live: f64,
    pub predicted: u8,
    pub quality: f64,
    pub corrected: bool,
    /// Ground-truth live/spoof label of the sample.
    pub label: u8,
}

pub const DUMP_HEADER: &str = "id,p_live,predicted,quality,corrected,label";

pub fn prediction_records(ds: &Dataset, preds: &[Prediction]) -> Vec<PredictionRecord> {
    ds.samples
        .iter()
        .zip(preds)
        .map(|(s, p)| PredictionRecord {
            id: s.id,
            p_live: p.p_live(),
            predicted: p.predicted_class,
            quality: p.quality,
            corrected: p.corrected,
            label: s.c,
        })
        .collect()
}

pub fn format_dump(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    out.push_str(DUMP_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.id,
            io_fmt_real(r.p_live),
            r.predicted,
            io_fmt_real(r.quality),
            u8::from(r.corrected),
            r.label
        );
    }
    out
}

pub fn parse_dump(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == DUMP_HEADER => {}
        Some(_) => return Err(DpmError::parse(1, format!("expected header `{DUMP_HEADER}`"))),
        None => return Err(DpmError::EmptyDataset),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(DpmError::parse(lineno, format!("expected 6 fields, found {}", f.len())));
        }
        let field = |k: usize, name: &str| -> Result<f64> {
            f[k].parse::<f64>()
                .map_err(|e| DpmError::parse(lineno, format!("field `{name}`: {e}")))
        };
        let flag = |k: usize, name: &str| -> Result<u8> {
            match f[k] {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(DpmError::parse(lineno, format!("field `{name}`: expected 0/1, found {other:?}"))),
            }
        };
        out.push(PredictionRecord {
            id: f[0]
                .parse()
                .map_err(|e| DpmError::parse(lineno, format!("field `id`: {e}")))?,
            p_live: field(1, "p_live")?,
            predicted: flag(2, "predicted")?,
            quality: field(3, "quality")?,
            corrected: flag(4, "corrected")? == 1,
            label: flag(5, "label")?,
        });
    }
    if out.is_empty() {
        return Err(DpmError::EmptyDataset);
    }
    Ok(out)
}

pub fn save_dump(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_dump(records))?;
    Ok(())
}

pub fn load_dump(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    parse_dump(&fs::read_to_string(path)?)
}

/// `p_live` of every prediction, in order.
pub fn live_scores(preds: &[Prediction]) -> Array1<f64> {
    preds.iter().map(Prediction::p_live).collect()
}
