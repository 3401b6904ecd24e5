//! Backbone, variance heads and linear classifiers with hand-written
//! backward passes.
//!
//! The backbone maps features `x` to an embedding `mu`. The label-quality
//! head maps `mu` to a per-dimension standard deviation `sigma_L`, the
//! data-quality head maps `mu` to a per-sample variance `sigma_D^2`. The
//! live/spoof classifier `omega_c` and the per-category semantic classifiers
//! `omega_s` are bias-free matrices whose rows are class prototypes.

mod checkpoint;
mod layers;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{Linear, Mlp, MlpCache};

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DpmError, Result};

/// Shape of every parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Hidden widths of the data-quality head; empty means a single affine map.
    pub dq_hidden: Vec<usize>,
    pub categories: BTreeMap<String, usize>,
}

impl ModelConfig {
    pub fn new(input_dim: usize, categories: BTreeMap<String, usize>) -> Self {
        ModelConfig {
            input_dim,
            hidden: vec![64, 64],
            embed_dim: 32,
            dq_hidden: Vec::new(),
            categories,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 {
            return Err(DpmError::Config(
                "input and embedding dimensions must be >= 1".into(),
            ));
        }
        if self.hidden.iter().chain(&self.dq_hidden).any(|&h| h == 0) {
            return Err(DpmError::Config("hidden widths must be >= 1".into()));
        }
        if let Some((name, _)) = self.categories.iter().find(|(_, &a)| a < 2) {
            return Err(DpmError::Config(format!(
                "category {name:?} needs at least two classes"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Backbone,
    LqHead,
    DqHead,
    OmegaC,
    OmegaS,
}

/// Mutable view of one parameter tensor, in canonical order.
pub struct TensorMut<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// Read-only view of one parameter tensor, in canonical order.
pub struct TensorRef<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Backbone `x -> mu`.
    pub backbone: Mlp,
    /// `mu -> log sigma_L^2`, one entry per embedding dimension.
    pub lq_head: Linear,
    /// `mu -> log sigma_D^2`, one scalar per sample.
    pub dq_head: Mlp,
    /// `[2, B]`; row 0 is spoof, row 1 is live.
    pub omega_c: Array2<f64>,
    /// `[A_k, B]` per semantic category.
    pub omega_s: BTreeMap<String, Array2<f64>>,
}

/// Per-sample outputs of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub mu: Array2<f64>,
    pub sigma_l: Option<Array2<f64>>,
    pub sigma_d_sq: Option<Array1<f64>>,
}

impl ModelParams {
    /// Gaussian init with std `1/sqrt(fan_in)`; the last layer of each
    /// variance head starts at zero so both variances start at one.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = config.embed_dim;
        let mut widths = vec![config.input_dim];
        widths.extend(&config.hidden);
        widths.push(b);
        let backbone = Mlp::random(&widths, &mut rng);
        let lq_head = Linear::zeros(b, b);
        let mut dq_widths = vec![b];
        dq_widths.extend(&config.dq_hidden);
        dq_widths.push(1);
        let mut dq_head = Mlp::random(&dq_widths, &mut rng);
        let last = dq_head.layers.len() - 1;
        dq_head.layers[last] = Linear::zeros(dq_widths[last], 1);
        let omega_c = layers::gaussian_matrix(2, b, &mut rng);
        let omega_s = config
            .categories
            .iter()
            .map(|(name, &a)| (name.clone(), layers::gaussian_matrix(a, b, &mut rng)))
            .collect();
        Ok(ModelParams {
            config,
            backbone,
            lq_head,
            dq_head,
            omega_c,
            omega_s,
        })
    }

    /// Same shapes as `self`, every entry zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data.fill(0.0);
        }
        out
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
            a.as_slice().expect("parameters are contiguous")
        }
        let mut out = Vec::new();
        for (i, l) in self.backbone.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("backbone.{i}.weight"),
                group: ParamGroup::Backbone,
                shape: l.weight.shape().to_vec(),
                data: slice(&l.weight),
            });
            out.push(TensorRef {
                name: format!("backbone.{i}.bias"),
                group: ParamGroup::Backbone,
                shape: l.bias.shape().to_vec(),
                data: slice(&l.bias),
            });
        }
        out.push(TensorRef {
            name: "lq_head.weight".into(),
            group: ParamGroup::LqHead,
            shape: self.lq_head.weight.shape().to_vec(),
            data: slice(&self.lq_head.weight),
        });
        out.push(TensorRef {
            name: "lq_head.bias".into(),
            group: ParamGroup::LqHead,
            shape: self.lq_head.bias.shape().to_vec(),
            data: slice(&self.lq_head.bias),
        });
        for (i, l) in self.dq_head.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("dq_head.{i}.weight"),
                group: ParamGroup::DqHead,
                shape: l.weight.shape().to_vec(),
                data: slice(&l.weight),
            });
            out.push(TensorRef {
                name: format!("dq_head.{i}.bias"),
                group: ParamGroup::DqHead,
                shape: l.bias.shape().to_vec(),
                data: slice(&l.bias),
            });
        }
        out.push(TensorRef {
            name: "omega_c".into(),
            group: ParamGroup::OmegaC,
            shape: self.omega_c.shape().to_vec(),
            data: slice(&self.omega_c),
        });
        for (name, w) in &self.omega_s {
            out.push(TensorRef {
                name: format!("omega_s.{name}"),
                group: ParamGroup::OmegaS,
                shape: w.shape().to_vec(),
                data: slice(w),
            });
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        fn view<'a>(
            name: String,
            group: ParamGroup,
            shape: Vec<usize>,
            data: Option<&'a mut [f64]>,
        ) -> TensorMut<'a> {
            TensorMut {
                name,
                group,
                shape,
                data: data.expect("parameters are contiguous"),
            }
        }
        let mut out = Vec::new();
        for (i, l) in self.backbone.layers.iter_mut().enumerate() {
            let shape = l.weight.shape().to_vec();
            out.push(view(
                format!("backbone.{i}.weight"),
                ParamGroup::Backbone,
                shape,
                l.weight.as_slice_mut(),
            ));
            let shape = l.bias.shape().to_vec();
            out.push(view(
                format!("backbone.{i}.bias"),
                ParamGroup::Backbone,
                shape,
                l.bias.as_slice_mut(),
            ));
        }
        let shape = self.lq_head.weight.shape().to_vec();
        out.push(view(
            "lq_head.weight".into(),
            ParamGroup::LqHead,
            shape,
            self.lq_head.weight.as_slice_mut(),
        ));
        let shape = self.lq_head.bias.shape().to_vec();
        out.push(view(
            "lq_head.bias".into(),
            ParamGroup::LqHead,
            shape,
            self.lq_head.bias.as_slice_mut(),
        ));
        for (i, l) in self.dq_head.layers.iter_mut().enumerate() {
            let shape = l.weight.shape().to_vec();
            out.push(view(
                format!("dq_head.{i}.weight"),
                ParamGroup::DqHead,
                shape,
                l.weight.as_slice_mut(),
            ));
            let shape = l.bias.shape().to_vec();
            out.push(view(
                format!("dq_head.{i}.bias"),
                ParamGroup::DqHead,
                shape,
                l.bias.as_slice_mut(),
            ));
        }
        let shape = self.omega_c.shape().to_vec();
        out.push(view(
            "omega_c".into(),
            ParamGroup::OmegaC,
            shape,
            self.omega_c.as_slice_mut(),
        ));
        for (name, w) in self.omega_s.iter_mut() {
            let shape = w.shape().to_vec();
            out.push(view(
                format!("omega_s.{name}"),
                ParamGroup::OmegaS,
                shape,
                w.as_slice_mut(),
            ));
        }
        out
    }

    /// Every tensor of `group` as one flat vector, in canonical order.
    pub fn group_values(&self, group: ParamGroup) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .filter(|t| t.group == group)
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(DpmError::shape("embed input", self.config.input_dim, x.ncols()));
        }
        Ok(())
    }

    fn check_embedding(&self, context: &'static str, m: &ArrayView2<f64>) -> Result<()> {
        if m.ncols() != self.embed_dim() {
            return Err(DpmError::shape(context, self.embed_dim(), m.ncols()));
        }
        Ok(())
    }

    /// `mu = h_theta1(x)`.
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.backbone.forward(x))
    }

    /// Forward through the backbone keeping the activations for `backbone_backward`.
    pub fn embed_cached(&self, x: ArrayView2<f64>) -> Result<MlpCache> {
        self.check_input(&x)?;
        Ok(self.backbone.forward_cached(x))
    }

    /// `sigma_L = exp(0.5 * (mu W^T + b))`, strictly positive.
    pub fn lq_variance(&self, mu: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_embedding("lq_variance input", &mu)?;
        Ok(self.lq_head.forward(mu).mapv_into(|a| (0.5 * a).exp()))
    }

    /// Backward of `lq_variance`: accumulates into `grads.lq_head`, returns `dL/dmu`.
    pub fn lq_variance_backward(
        &self,
        mu: ArrayView2<f64>,
        sigma_l: ArrayView2<f64>,
        d_sigma: ArrayView2<f64>,
        grads: &mut ModelParams,
    ) -> Array2<f64> {
        let d_pre = &d_sigma * &sigma_l * 0.5;
        self.lq_head
            .backward(mu, d_pre.view(), &mut grads.lq_head)
    }

    /// `sigma_D^2 = exp(h_theta3(mu))`, one positive scalar per row.
    pub fn dq_variance(&self, mu: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_embedding("dq_variance input", &mu)?;
        Ok(self.dq_head.forward(mu).column(0).mapv(f64::exp))
    }

    pub fn dq_variance_cached(&self, mu: ArrayView2<f64>) -> Result<(Array1<f64>, MlpCache)> {
        self.check_embedding("dq_variance input", &mu)?;
        let cache = self.dq_head.forward_cached(mu);
        let var = cache.output().column(0).mapv(f64::exp);
        Ok((var, cache))
    }

    /// Backward of `dq_variance`: accumulates into `grads.dq_head`, returns `dL/dmu`.
    pub fn dq_variance_backward(
        &self,
        cache: &MlpCache,
        var: &Array1<f64>,
        d_var: &Array1<f64>,
        grads: &mut ModelParams,
    ) -> Array2<f64> {
        let d_out = (d_var * var).insert_axis(Axis(1));
        self.dq_head.backward(cache, d_out.view(), &mut grads.dq_head)
    }

    /// Backward of the backbone: accumulates into `grads.backbone`, returns `dL/dx`.
    pub fn backbone_backward(
        &self,
        cache: &MlpCache,
        d_mu: ArrayView2<f64>,
        grads: &mut ModelParams,
    ) -> Array2<f64> {
        self.backbone.backward(cache, d_mu, &mut grads.backbone)
    }

    pub fn omega_s(&self, category: &str) -> Result<&Array2<f64>> {
        self.omega_s
            .get(category)
            .ok_or_else(|| DpmError::Config(format!("unknown semantic category {category:?}")))
    }

    /// `z · omega_S^T`, shape `[N, A_k]`.
    pub fn semantic_logits(&self, category: &str, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_embedding("semantic_logits input", &z)?;
        Ok(z.dot(&self.omega_s(category)?.t()))
    }

    /// `mu · omega_C^T`, shape `[N, 2]`.
    pub fn live_spoof_logits(&self, mu: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_embedding("live_spoof_logits input", &mu)?;
        Ok(mu.dot(&self.omega_c.t()))
    }

    /// Embedding plus both variances for a feature batch.
    pub fn forward_all(&self, x: ArrayView2<f64>) -> Result<EmbeddingBatch> {
        let mu = self.embed(x)?;
        let sigma_l = self.lq_variance(mu.view())?;
        let sigma_d_sq = self.dq_variance(mu.view())?;
        Ok(EmbeddingBatch {
            mu,
            sigma_l: Some(sigma_l),
            sigma_d_sq: Some(sigma_d_sq),
        })
    }
}
