use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// `y = x W^T + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

pub(crate) fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let std = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || std * rng.sample::<f64, _>(StandardNormal))
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn random<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: gaussian_matrix(output, input, rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(&x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

/// Stack of linear layers with `tanh` between them and no activation after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs of every layer plus the final output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn random<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Linear::random(w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(f64::tanh);
            h = layer.forward(h.view());
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_owned());
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(f64::tanh);
            let next = layer.forward(h.view());
            inputs.push(h);
            h = next;
        }
        MlpCache { inputs, output: h }
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let mut d = d_out.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            d = layer.backward(input.view(), d.view(), &mut grad.layers[i]);
            if i > 0 {
                // input of layer i is tanh of the previous pre-activation
                d.zip_mut_with(input, |g, &h| *g *= 1.0 - h * h);
            }
        }
        d
    }
}
