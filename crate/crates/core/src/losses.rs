//! Training objectives and their analytic gradients.
//!
//! Every loss reports the per-sample values and their mean. Gradients are
//! always of the mean.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::Dataset;
use crate::error::{DpmError, Result};
use crate::model::ModelParams;

/// Lower bound applied to variances inside logs and divisions.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_sample: Array1<f64>,
}

impl LossValue {
    pub fn from_per_sample(per_sample: Array1<f64>) -> Self {
        let total = if per_sample.is_empty() {
            0.0
        } else {
            per_sample.mean().unwrap_or(0.0)
        };
        LossValue { total, per_sample }
    }
}

/// Gradients of a bias-free linear cross-entropy with respect to its input
/// rows and its prototype matrix.
#[derive(Debug, Clone)]
pub struct CeGrad {
    pub d_input: Array2<f64>,
    pub d_omega: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ProbabilisticCeGrad {
    pub d_mu: Array2<f64>,
    pub d_sigma: Array2<f64>,
    pub d_omega: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct NllGrad {
    pub d_mu: Array2<f64>,
    pub d_omega: Array2<f64>,
    pub d_var: Array1<f64>,
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(DpmError::shape("labels", rows, labels.len()));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(DpmError::LabelOutOfRange {
            row,
            label,
            num_classes: classes,
        });
    }
    Ok(())
}

fn check_width(context: &'static str, input: &ArrayView2<f64>, omega: &ArrayView2<f64>) -> Result<()> {
    if input.ncols() != omega.ncols() {
        return Err(DpmError::shape(context, omega.ncols(), input.ncols()));
    }
    Ok(())
}

/// Row-wise `-log softmax(logits)[label]` and `d mean / d logits`.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> (Array1<f64>, Array2<f64>) {
    let n = logits.nrows();
    let mut per = Array1::zeros(n);
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        per[i] = lse - row[labels[i]];
        let mut g = grad.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            g[j] = (v - lse).exp() / n as f64;
        }
        g[labels[i]] -= 1.0 / n as f64;
    }
    (per, grad)
}

/// Plain cross-entropy of `input · omega^T` against `labels`.
pub fn semantic_ce_deterministic(
    mu: ArrayView2<f64>,
    omega: ArrayView2<f64>,
    labels: &[usize],
) -> Result<LossValue> {
    semantic_ce_deterministic_grad(mu, omega, labels).map(|(v, _)| v)
}

pub fn semantic_ce_deterministic_grad(
    mu: ArrayView2<f64>,
    omega: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(LossValue, CeGrad)> {
    check_width("cross-entropy input", &mu, &omega)?;
    check_labels(labels, mu.nrows(), omega.nrows())?;
    let logits = mu.dot(&omega.t());
    let (per, d_logits) = softmax_cross_entropy(logits.view(), labels);
    let grad = CeGrad {
        d_input: d_logits.dot(&omega),
        d_omega: d_logits.t().dot(&mu),
    };
    Ok((LossValue::from_per_sample(per), grad))
}

/// Reparameterized sample `z = mu + eps * sigma_L`.
pub fn sample_z(
    mu: ArrayView2<f64>,
    sigma_l: ArrayView2<f64>,
    epsilon: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if mu.shape() != sigma_l.shape() {
        return Err(DpmError::shape("sigma_L", format!("{:?}", mu.shape()), format!("{:?}", sigma_l.shape())));
    }
    if mu.shape() != epsilon.shape() {
        return Err(DpmError::shape("epsilon", format!("{:?}", mu.shape()), format!("{:?}", epsilon.shape())));
    }
    let mut z = mu.to_owned();
    ndarray::Zip::from(&mut z)
        .and(&sigma_l)
        .and(&epsilon)
        .for_each(|z, &s, &e| *z += e * s);
    Ok(z)
}

/// Cross-entropy evaluated at the reparameterized sample of `N(mu, sigma_L^2 I)`.
pub fn semantic_ce_probabilistic(
    mu: ArrayView2<f64>,
    sigma_l: ArrayView2<f64>,
    omega: ArrayView2<f64>,
    labels: &[usize],
    epsilon: ArrayView2<f64>,
) -> Result<LossValue> {
    semantic_ce_probabilistic_grad(mu, sigma_l, omega, labels, epsilon).map(|(v, _)| v)
}

pub fn semantic_ce_probabilistic_grad(
    mu: ArrayView2<f64>,
    sigma_l: ArrayView2<f64>,
    omega: ArrayView2<f64>,
    labels: &[usize],
    epsilon: ArrayView2<f64>,
) -> Result<(LossValue, ProbabilisticCeGrad)> {
    let z = sample_z(mu, sigma_l, epsilon)?;
    let (value, g) = semantic_ce_deterministic_grad(z.view(), omega, labels)?;
    let d_sigma = &g.d_input * &epsilon;
    Ok((
        value,
        ProbabilisticCeGrad {
            d_mu: g.d_input,
            d_sigma,
            d_omega: g.d_omega,
        },
    ))
}

/// Live/spoof cross-entropy; `c` indexes the rows of `omega_c`.
pub fn live_spoof_ce(mu: ArrayView2<f64>, omega_c: ArrayView2<f64>, c: &[u8]) -> Result<LossValue> {
    live_spoof_ce_grad(mu, omega_c, c).map(|(v, _)| v)
}

pub fn live_spoof_ce_grad(
    mu: ArrayView2<f64>,
    omega_c: ArrayView2<f64>,
    c: &[u8],
) -> Result<(LossValue, CeGrad)> {
    let labels: Vec<usize> = c.iter().map(|&v| v as usize).collect();
    semantic_ce_deterministic_grad(mu, omega_c, &labels)
}

/// `0.5 * (ln s2 + |omega_c - mu|^2 / s2) + 0.5 * ln(2 pi)` per sample.
pub fn dq_gaussian_nll(
    mu: ArrayView2<f64>,
    omega_c: ArrayView2<f64>,
    c: &[u8],
    sigma_d_sq: &Array1<f64>,
) -> Result<LossValue> {
    dq_gaussian_nll_grad(mu, omega_c, c, sigma_d_sq).map(|(v, _)| v)
}

pub fn dq_gaussian_nll_grad(
    mu: ArrayView2<f64>,
    omega_c: ArrayView2<f64>,
    c: &[u8],
    sigma_d_sq: &Array1<f64>,
) -> Result<(LossValue, NllGrad)> {
    check_width("Gaussian NLL input", &mu, &omega_c)?;
    let labels: Vec<usize> = c.iter().map(|&v| v as usize).collect();
    check_labels(&labels, mu.nrows(), omega_c.nrows())?;
    if sigma_d_sq.len() != mu.nrows() {
        return Err(DpmError::shape("sigma_D^2", mu.nrows(), sigma_d_sq.len()));
    }
    if let Some((row, &value)) = sigma_d_sq.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(DpmError::NonPositiveVariance { row, value });
    }
    let n = mu.nrows();
    let inv_n = 1.0 / n as f64;
    let half_ln_2pi = 0.5 * (2.0 * PI).ln();
    let mut per = Array1::zeros(n);
    let mut d_mu = Array2::zeros(mu.raw_dim());
    let mut d_omega = Array2::zeros(omega_c.raw_dim());
    let mut d_var = Array1::zeros(n);
    for i in 0..n {
        let target = omega_c.row(labels[i]);
        let diff = &target - &mu.row(i);
        let dist_sq = diff.dot(&diff);
        let raw = sigma_d_sq[i];
        let var = raw.max(VARIANCE_FLOOR);
        per[i] = 0.5 * (var.ln() + dist_sq / var) + half_ln_2pi;
        if raw >= VARIANCE_FLOOR {
            d_var[i] = 0.5 * (1.0 / var - dist_sq / (var * var)) * inv_n;
        }
        let scaled = &diff * (inv_n / var);
        let mut row = d_mu.row_mut(i);
        row -= &scaled;
        let mut orow = d_omega.row_mut(labels[i]);
        orow += &scaled;
    }
    Ok((
        LossValue::from_per_sample(per),
        NllGrad {
            d_mu,
            d_omega,
            d_var,
        },
    ))
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize_rows(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = m.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) {
            return Err(DpmError::ZeroNorm { row: i });
        }
        row /= norm;
    }
    Ok(out)
}

/// Backward of `l2_normalize_rows`: `dx = (dy - y (y·dy)) / |x|`.
pub fn l2_normalize_rows_backward(
    input: ArrayView2<f64>,
    normalized: ArrayView2<f64>,
    d_out: ArrayView2<f64>,
) -> Array2<f64> {
    let mut d = d_out.to_owned();
    for ((mut g, y), x) in d
        .rows_mut()
        .into_iter()
        .zip(normalized.rows())
        .zip(input.rows())
    {
        let norm = x.dot(&x).sqrt();
        let proj = y.dot(&g);
        g.zip_mut_with(&y, |gi, &yi| *gi = (*gi - yi * proj) / norm);
    }
    d
}

/// Gaussian NLL on row-normalized `mu` and `omega_c`, with gradients back to
/// the unnormalized inputs.
pub fn normalized_dq_nll_grad(
    mu: ArrayView2<f64>,
    omega_c: ArrayView2<f64>,
    c: &[u8],
    sigma_d_sq: &Array1<f64>,
) -> Result<(LossValue, NllGrad)> {
    let mu_hat = l2_normalize_rows(mu)?;
    let omega_hat = l2_normalize_rows(omega_c)?;
    let (value, g) = dq_gaussian_nll_grad(mu_hat.view(), omega_hat.view(), c, sigma_d_sq)?;
    Ok((
        value,
        NllGrad {
            d_mu: l2_normalize_rows_backward(mu, mu_hat.view(), g.d_mu.view()),
            d_omega: l2_normalize_rows_backward(omega_c, omega_hat.view(), g.d_omega.view()),
            d_var: g.d_var,
        },
    ))
}

/// A slice of a dataset in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub c: Vec<u8>,
    pub semantic: BTreeMap<String, Vec<Option<usize>>>,
}

impl Batch {
    pub fn from_dataset(ds: &Dataset, indices: &[usize]) -> Self {
        let mut x = Array2::zeros((indices.len(), ds.feature_dim));
        let mut c = Vec::with_capacity(indices.len());
        let mut semantic: BTreeMap<String, Vec<Option<usize>>> = ds
            .categories
            .keys()
            .map(|k| (k.clone(), Vec::with_capacity(indices.len())))
            .collect();
        for (row, &i) in indices.iter().enumerate() {
            let s = &ds.samples[i];
            x.row_mut(row).iter_mut().zip(&s.x).for_each(|(o, v)| *o = *v);
            c.push(s.c);
            for (name, labels) in semantic.iter_mut() {
                labels.push(s.s.get(name).copied());
            }
        }
        Batch { x, c, semantic }
    }

    pub fn full(ds: &Dataset) -> Self {
        Self::from_dataset(ds, &(0..ds.len()).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// A combined objective, its named parts, and optionally its parameter gradient.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: LossValue,
    pub components: BTreeMap<String, f64>,
    pub grads: Option<ModelParams>,
}

fn labeled_rows(labels: &[Option<usize>]) -> (Vec<usize>, Vec<usize>) {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|l| (i, l)))
        .unzip()
}

/// Live/spoof cross-entropy plus `lambda_s` times the semantic cross-entropy
/// of every category, each averaged over the rows it applies to.
///
/// With `epsilon = Some(..)` the semantic terms use the reparameterized
/// sample `z = mu + eps * sigma_L`; with `None` they use `mu` directly and the
/// label-quality head is not evaluated.
pub fn stage1_objective(
    params: &ModelParams,
    batch: &Batch,
    epsilon: Option<ArrayView2<f64>>,
    lambda_s: f64,
) -> Result<Objective> {
    stage1_impl(params, batch, epsilon, lambda_s, false)
}

pub fn stage1_objective_grad(
    params: &ModelParams,
    batch: &Batch,
    epsilon: Option<ArrayView2<f64>>,
    lambda_s: f64,
) -> Result<Objective> {
    stage1_impl(params, batch, epsilon, lambda_s, true)
}

fn stage1_impl(
    params: &ModelParams,
    batch: &Batch,
    epsilon: Option<ArrayView2<f64>>,
    lambda_s: f64,
    want_grad: bool,
) -> Result<Objective> {
    let n = batch.len();
    let cache = params.embed_cached(batch.x.view())?;
    let mu = cache.output();
    let mut grads = want_grad.then(|| params.zeros_like());

    let (ce_c, g_c) = live_spoof_ce_grad(mu.view(), params.omega_c.view(), &batch.c)?;
    let mut per_sample = ce_c.per_sample.clone();
    let mut components = BTreeMap::new();
    components.insert("live_spoof".to_string(), ce_c.total);
    let mut d_mu = g_c.d_input;
    if let Some(g) = grads.as_mut() {
        g.omega_c += &g_c.d_omega;
    }

    let semantic_on = lambda_s != 0.0 && !params.omega_s.is_empty();
    let sigma_l = match (semantic_on, epsilon) {
        (true, Some(eps)) => {
            if eps.shape() != mu.shape() {
                return Err(DpmError::shape(
                    "epsilon",
                    format!("{:?}", mu.shape()),
                    format!("{:?}", eps.shape()),
                ));
            }
            Some(params.lq_variance(mu.view())?)
        }
        _ => None,
    };
    let mut d_sigma = sigma_l.as_ref().map(|s| Array2::<f64>::zeros(s.raw_dim()));

    if semantic_on {
        for (name, omega) in &params.omega_s {
            let Some(labels) = batch.semantic.get(name) else {
                continue;
            };
            let (rows, targets) = labeled_rows(labels);
            if rows.is_empty() {
                continue;
            }
            let mu_k = mu.select(Axis(0), &rows);
            let (value, d_mu_k, d_sigma_k, d_omega) = match (&sigma_l, epsilon) {
                (Some(sigma), Some(eps)) => {
                    let s_k = sigma.select(Axis(0), &rows);
                    let e_k = eps.select(Axis(0), &rows);
                    let (v, g) = semantic_ce_probabilistic_grad(
                        mu_k.view(),
                        s_k.view(),
                        omega.view(),
                        &targets,
                        e_k.view(),
                    )?;
                    (v, g.d_mu, Some(g.d_sigma), g.d_omega)
                }
                _ => {
                    let (v, g) = semantic_ce_deterministic_grad(mu_k.view(), omega.view(), &targets)?;
                    (v, g.d_input, None, g.d_omega)
                }
            };
            components.insert(format!("semantic.{name}"), value.total);
            // rescale so that mean(per_sample) keeps the per-category averaging
            let weight = lambda_s * n as f64 / rows.len() as f64;
            for (&r, &l) in rows.iter().zip(value.per_sample.iter()) {
                per_sample[r] += weight * l;
            }
            for (k, &r) in rows.iter().enumerate() {
                let mut dst = d_mu.row_mut(r);
                dst.scaled_add(lambda_s, &d_mu_k.row(k));
                if let (Some(ds), Some(dsk)) = (d_sigma.as_mut(), d_sigma_k.as_ref()) {
                    let mut dst = ds.row_mut(r);
                    dst.scaled_add(lambda_s, &dsk.row(k));
                }
            }
            if let Some(g) = grads.as_mut() {
                let slot = g
                    .omega_s
                    .get_mut(name)
                    .expect("gradient has the same categories");
                slot.scaled_add(lambda_s, &d_omega);
            }
        }
    }

    if let Some(g) = grads.as_mut() {
        if let (Some(sigma), Some(ds)) = (&sigma_l, &d_sigma) {
            let d_mu_lq = params.lq_variance_backward(mu.view(), sigma.view(), ds.view(), g);
            d_mu += &d_mu_lq;
        }
        params.backbone_backward(&cache, d_mu.view(), g);
    }

    if let Some(sigma) = &sigma_l {
        components.insert("mean_sigma_l".to_string(), sigma.mean().unwrap_or(0.0));
    }
    Ok(Objective {
        value: LossValue::from_per_sample(per_sample),
        components,
        grads,
    })
}

/// Gaussian NLL on normalized embeddings and prototypes. The backbone is
/// treated as frozen: gradients flow to `omega_c` and the data-quality head only.
pub fn stage2_objective(params: &ModelParams, batch: &Batch) -> Result<Objective> {
    stage2_impl(params, batch, false)
}

pub fn stage2_objective_grad(params: &ModelParams, batch: &Batch) -> Result<Objective> {
    stage2_impl(params, batch, true)
}

/// Stage-2 objective on precomputed embeddings of a frozen backbone.
pub fn stage2_objective_from_embedding(params: &ModelParams, mu: ArrayView2<f64>, c: &[u8]) -> Result<Objective> {
    stage2_from_mu(params, mu, c, false)
}

pub fn stage2_objective_from_embedding_grad(
    params: &ModelParams,
    mu: ArrayView2<f64>,
    c: &[u8],
) -> Result<Objective> {
    stage2_from_mu(params, mu, c, true)
}

fn stage2_impl(params: &ModelParams, batch: &Batch, want_grad: bool) -> Result<Objective> {
    let mu = params.embed(batch.x.view())?;
    stage2_from_mu(params, mu.view(), &batch.c, want_grad)
}

fn stage2_from_mu(params: &ModelParams, mu: ArrayView2<f64>, c: &[u8], want_grad: bool) -> Result<Objective> {
    let (var, dq_cache) = params.dq_variance_cached(mu)?;
    let (value, g) = normalized_dq_nll_grad(mu, params.omega_c.view(), c, &var)?;
    let mut components = BTreeMap::new();
    components.insert("dq_nll".to_string(), value.total);
    components.insert("mean_sigma_d_sq".to_string(), var.mean().unwrap_or(0.0));
    let grads = if want_grad {
        let mut grads = params.zeros_like();
        grads.omega_c += &g.d_omega;
        params.dq_variance_backward(&dq_cache, &var, &g.d_var, &mut grads);
        Some(grads)
    } else {
        None
    };
    Ok(Objective {
        value,
        components,
        grads,
    })
}
