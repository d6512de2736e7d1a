use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Tanh,
    Identity,
}

/// Affine layer computing `x · weight + bias` for row-vector inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape `(inputs, outputs)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.len() == other.bias.len()
    }
}

/// Fully connected network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub output: OutputActivation,
}

/// Per-layer gradients, shaped like [`Mlp::layers`].
pub type Gradients = Vec<Layer>;

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer (`inputs[0]` is the network input).
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activation of every layer.
    pub pre_activations: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// All-zero network with the given layer sizes (input first, output last).
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            output,
        }
    }

    /// Uniform fan-in initialization: every weight and bias of a layer is
    /// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(sizes: &[usize], output: OutputActivation, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes, output);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.nrows() as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.gen_range(-bound..bound));
            layer.bias.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        net
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weight.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.ncols()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            let a = if i < last {
                z.mapv(|v| v.max(0.0))
            } else {
                match self.output {
                    OutputActivation::Tanh => z.mapv(f64::tanh),
                    OutputActivation::Identity => z.clone(),
                }
            };
            inputs.push(h);
            pre_activations.push(z);
            h = a;
        }
        Ok(ForwardCache {
            inputs,
            pre_activations,
            output: h,
        })
    }

    /// Output only, for callers that do not need a backward pass.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(x)?.output)
    }

    /// Single-input convenience wrapper.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(view)?.output.into_raw_vec_and_offset().0)
    }

    /// Reverse-mode gradients of `sum(output_gradient ⊙ output)` with respect
    /// to every parameter and to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if output_gradient.dim() != cache.output.dim() {
            return Err(Error::dim(
                "output gradient",
                cache.output.len(),
                output_gradient.len(),
            ));
        }
        let mut upstream = output_gradient.to_owned();
        if self.output == OutputActivation::Tanh {
            Zip::from(&mut upstream)
                .and(&cache.output)
                .for_each(|g, &y| *g *= 1.0 - y * y);
        }
        self.backward_from_pre_activation(cache, upstream)
    }

    /// Like [`backward`](Self::backward), starting from the gradient with
    /// respect to the last layer's pre-activation (before the output
    /// activation).
    pub fn backward_from_pre_activation(
        &self,
        cache: &ForwardCache,
        pre_activation_gradient: Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::dim(
                "forward cache",
                self.layers.len(),
                cache.inputs.len(),
            ));
        }
        let last = self.layers.len() - 1;
        if pre_activation_gradient.dim() != cache.pre_activations[last].dim() {
            return Err(Error::dim(
                "pre-activation gradient",
                cache.pre_activations[last].len(),
                pre_activation_gradient.len(),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = pre_activation_gradient;
        for i in (0..self.layers.len()).rev() {
            if i != last {
                Zip::from(&mut upstream)
                    .and(&cache.pre_activations[i])
                    .for_each(|g, &v| {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    });
            }
            let layer = &self.layers[i];
            grads.push(Layer {
                weight: cache.inputs[i].t().dot(&upstream),
                bias: upstream.sum_axis(Axis(0)),
            });
            upstream = upstream.dot(&layer.weight.t());
        }
        grads.reverse();
        Ok((grads, upstream))
    }
}

/// `target ← tau·target + (1 − tau)·source`, elementwise.
pub fn polyak_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(source) {
        return Err(Error::Config(
            "polyak update between differently shaped networks".into(),
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!(
            "polyak coefficient {tau} outside [0, 1]"
        )));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        Zip::from(&mut t.weight)
            .and(&s.weight)
            .for_each(|t, &s| *t = tau * *t + (1.0 - tau) * s);
        Zip::from(&mut t.bias)
            .and(&s.bias)
            .for_each(|t, &s| *t = tau * *t + (1.0 - tau) * s);
    }
    Ok(())
}
