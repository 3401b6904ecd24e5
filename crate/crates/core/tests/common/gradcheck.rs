//! Central-difference checks of every analytic gradient. Each check draws its
//! own shapes and values per configuration.

use std::collections::BTreeMap;

use dpm_core::losses::{
    dq_gaussian_nll_grad, live_spoof_ce_grad, normalized_dq_nll_grad, semantic_ce_deterministic_grad,
    semantic_ce_probabilistic_grad, stage1_objective_grad, stage2_objective_from_embedding_grad, Batch,
};
use ndarray::{Array1, Array2};
use rand::Rng;

use super::*;

pub const CONFIGS: u64 = 12;

pub struct GradResult {
    pub name: &'static str,
    pub configs: usize,
    pub worst: f64,
}

fn concat(parts: &[&Array2<f64>]) -> Vec<f64> {
    parts.iter().flat_map(|m| m.iter().copied()).collect()
}

/// Splits `v` into matrices shaped like `likes`.
fn split(v: &[f64], likes: &[&Array2<f64>]) -> Vec<Array2<f64>> {
    let mut at = 0;
    likes
        .iter()
        .map(|m| {
            let n = m.len();
            let out = unflatten(&v[at..at + n], m);
            at += n;
            out
        })
        .collect()
}

fn labels(r: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..classes)).collect()
}

fn positive(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    normal_matrix(r, rows, cols, 0.5).mapv(f64::exp)
}

fn run(name: &'static str, mut check: impl FnMut(u64) -> f64) -> GradResult {
    let worst = (0..CONFIGS).map(&mut check).fold(0.0, f64::max);
    GradResult {
        name,
        configs: CONFIGS as usize,
        worst,
    }
}

fn semantic_ce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, b, a) = (r.random_range(1..7), r.random_range(2..6), r.random_range(2..6));
    let mu = normal_matrix(&mut r, n, b, 1.0);
    let omega = normal_matrix(&mut r, a, b, 1.0);
    let s = labels(&mut r, n, a);
    let (_, g) = semantic_ce_deterministic_grad(mu.view(), omega.view(), &s).unwrap();
    let analytic = concat(&[&g.d_input, &g.d_omega]);
    let mut f = |v: &[f64]| {
        let p = split(v, &[&mu, &omega]);
        semantic_ce_deterministic_grad(p[0].view(), p[1].view(), &s).unwrap().0.total
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &concat(&[&mu, &omega])))
}

fn probabilistic_ce(seed: u64) -> f64 {
    let mut r = rng(seed + 100);
    let (n, b, a) = (r.random_range(1..7), r.random_range(2..6), r.random_range(2..6));
    let mu = normal_matrix(&mut r, n, b, 1.0);
    let sigma = positive(&mut r, n, b);
    let omega = normal_matrix(&mut r, a, b, 1.0);
    let eps = normal_matrix(&mut r, n, b, 1.0);
    let s = labels(&mut r, n, a);
    let (_, g) = semantic_ce_probabilistic_grad(mu.view(), sigma.view(), omega.view(), &s, eps.view()).unwrap();
    let analytic = concat(&[&g.d_mu, &g.d_sigma, &g.d_omega]);
    let mut f = |v: &[f64]| {
        let p = split(v, &[&mu, &sigma, &omega]);
        semantic_ce_probabilistic_grad(p[0].view(), p[1].view(), p[2].view(), &s, eps.view())
            .unwrap()
            .0
            .total
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &concat(&[&mu, &sigma, &omega])))
}

fn live_spoof(seed: u64) -> f64 {
    let mut r = rng(seed + 200);
    let (n, b) = (r.random_range(1..9), r.random_range(2..6));
    let mu = normal_matrix(&mut r, n, b, 1.0);
    let omega = normal_matrix(&mut r, 2, b, 1.0);
    let c: Vec<u8> = labels(&mut r, n, 2).into_iter().map(|v| v as u8).collect();
    let (_, g) = live_spoof_ce_grad(mu.view(), omega.view(), &c).unwrap();
    let analytic = concat(&[&g.d_input, &g.d_omega]);
    let mut f = |v: &[f64]| {
        let p = split(v, &[&mu, &omega]);
        live_spoof_ce_grad(p[0].view(), p[1].view(), &c).unwrap().0.total
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &concat(&[&mu, &omega])))
}

type NllFn = fn(
    ndarray::ArrayView2<f64>,
    ndarray::ArrayView2<f64>,
    &[u8],
    &Array1<f64>,
) -> dpm_core::Result<(dpm_core::losses::LossValue, dpm_core::losses::NllGrad)>;

fn nll(seed: u64, loss: NllFn) -> f64 {
    let mut r = rng(seed + 300);
    let (n, b) = (r.random_range(1..9), r.random_range(2..6));
    let mu = normal_matrix(&mut r, n, b, 1.0);
    let omega = normal_matrix(&mut r, 2, b, 1.0);
    let var = positive(&mut r, 1, n).row(0).to_owned().insert_axis(ndarray::Axis(0));
    let c: Vec<u8> = labels(&mut r, n, 2).into_iter().map(|v| v as u8).collect();
    let (_, g) = loss(mu.view(), omega.view(), &c, &var.row(0).to_owned()).unwrap();
    let d_var = g.d_var.clone().insert_axis(ndarray::Axis(0));
    let analytic = concat(&[&g.d_mu, &g.d_omega, &d_var]);
    let mut f = |v: &[f64]| {
        let p = split(v, &[&mu, &omega, &var]);
        loss(p[0].view(), p[1].view(), &c, &p[2].row(0).to_owned()).unwrap().0.total
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &concat(&[&mu, &omega, &var])))
}

/// `f = sum(w * head(.))` for a random weight `w`, checked against every
/// parameter and the head input together.
fn head(seed: u64, which: Head) -> f64 {
    let dq_hidden = if seed.is_multiple_of(2) { vec![] } else { vec![4] };
    let params = random_model(seed + 400, &[("spoof_type", 3)], dq_hidden);
    let mut r = rng(seed + 500);
    let n = r.random_range(1..7);
    let input_width = match which {
        Head::Backbone => params.config.input_dim,
        Head::Lq | Head::Dq => params.embed_dim(),
    };
    let input = normal_matrix(&mut r, n, input_width, 1.0);
    let out_width = match which {
        Head::Backbone | Head::Lq => params.embed_dim(),
        Head::Dq => 1,
    };
    let w = normal_matrix(&mut r, n, out_width, 1.0);

    let eval = |p: &ModelParams, x: &Array2<f64>| -> f64 {
        let out = match which {
            Head::Backbone => p.embed(x.view()).unwrap(),
            Head::Lq => p.lq_variance(x.view()).unwrap(),
            Head::Dq => p.dq_variance(x.view()).unwrap().insert_axis(ndarray::Axis(1)),
        };
        (&out * &w).sum()
    };

    let mut grads = params.zeros_like();
    let d_input = match which {
        Head::Backbone => {
            let cache = params.embed_cached(input.view()).unwrap();
            params.backbone_backward(&cache, w.view(), &mut grads)
        }
        Head::Lq => {
            let sigma = params.lq_variance(input.view()).unwrap();
            params.lq_variance_backward(input.view(), sigma.view(), w.view(), &mut grads)
        }
        Head::Dq => {
            let (var, cache) = params.dq_variance_cached(input.view()).unwrap();
            params.dq_variance_backward(&cache, &var, &w.column(0).to_owned(), &mut grads)
        }
    };
    let mut analytic = params_to_vec(&grads);
    analytic.extend(d_input.iter());

    let n_params = params_to_vec(&params).len();
    let mut x0 = params_to_vec(&params);
    x0.extend(input.iter());
    let mut probe = params.clone();
    let mut f = |v: &[f64]| {
        params_from_vec(&mut probe, &v[..n_params]);
        let x = unflatten(&v[n_params..], &input);
        eval(&probe, &x)
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &x0))
}

#[derive(Clone, Copy)]
enum Head {
    Backbone,
    Lq,
    Dq,
}

fn stage1(seed: u64) -> f64 {
    let params = random_model(seed + 600, &[("spoof_type", 3), ("attr", 2)], vec![]);
    let mut r = rng(seed + 700);
    let n = r.random_range(2..8);
    let x = normal_matrix(&mut r, n, params.config.input_dim, 1.0);
    let c: Vec<u8> = labels(&mut r, n, 2).into_iter().map(|v| v as u8).collect();
    let mut semantic = BTreeMap::new();
    let spoof_type = c.iter().map(|&ci| (ci == 0).then(|| r.random_range(0..3))).collect();
    semantic.insert("spoof_type".to_string(), spoof_type);
    semantic.insert("attr".to_string(), (0..n).map(|_| Some(r.random_range(0..2))).collect());
    let batch = Batch { x, c, semantic };
    let lambda = r.random_range(0.1..2.0);
    // alternate between the probabilistic and deterministic semantic terms
    let eps = (seed.is_multiple_of(2)).then(|| normal_matrix(&mut r, n, params.embed_dim(), 1.0));
    let eps_view = eps.as_ref().map(|e| e.view());

    let obj = stage1_objective_grad(&params, &batch, eps_view, lambda).unwrap();
    let analytic = params_to_vec(obj.grads.as_ref().unwrap());
    let mut probe = params.clone();
    let mut f = |v: &[f64]| {
        params_from_vec(&mut probe, v);
        stage1_objective_grad(&probe, &batch, eps_view, lambda).unwrap().value.total
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &params_to_vec(&params)))
}

fn stage2(seed: u64) -> f64 {
    let dq_hidden = if seed.is_multiple_of(2) { vec![] } else { vec![3] };
    let params = random_model(seed + 800, &[("spoof_type", 3)], dq_hidden);
    let mut r = rng(seed + 900);
    let n = r.random_range(1..8);
    let mu = normal_matrix(&mut r, n, params.embed_dim(), 1.0);
    let c: Vec<u8> = labels(&mut r, n, 2).into_iter().map(|v| v as u8).collect();
    let obj = stage2_objective_from_embedding_grad(&params, mu.view(), &c).unwrap();
    let analytic = params_to_vec(obj.grads.as_ref().unwrap());
    let mut probe = params.clone();
    let mut f = |v: &[f64]| {
        params_from_vec(&mut probe, v);
        stage2_objective_from_embedding_grad(&probe, mu.view(), &c).unwrap().value.total
    };
    relative_error(&analytic, &numeric_gradient(&mut f, &params_to_vec(&params)))
}

pub fn gradient_suite() -> Vec<GradResult> {
    vec![
        run("semantic cross-entropy", semantic_ce),
        run("probabilistic semantic cross-entropy", probabilistic_ce),
        run("live/spoof cross-entropy", live_spoof),
        run("data-quality Gaussian NLL", |s| nll(s, dq_gaussian_nll_grad)),
        run("normalized data-quality NLL", |s| nll(s + 50, normalized_dq_nll_grad)),
        run("backbone", |s| head(s, Head::Backbone)),
        run("label-quality head", |s| head(s + 20, Head::Lq)),
        run("data-quality head", |s| head(s + 40, Head::Dq)),
        run("stage-1 objective", stage1),
        run("stage-2 objective", stage2),
    ]
}
