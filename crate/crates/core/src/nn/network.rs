use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, MlpSpec};
use crate::error::{Error, Result};
use crate::SeededRng;

/// Location of one dense layer inside the flat parameter vector.
///
/// Weights are stored row-major with shape `(fan_in, fan_out)`, followed by `fan_out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerShape {
    pub fn weight_len(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn len(&self) -> usize {
        self.weight_len() + self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.weight_len();
        start..start + self.fan_out
    }
}

/// Forward identity whose backward pass multiplies the incoming gradient by `-lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReversal {
    lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "reversal strength must be non-negative, got {lambda}"
            )));
        }
        Ok(GradientReversal { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forward<'a>(&self, representation: ArrayView2<'a, f64>) -> ArrayView2<'a, f64> {
        representation
    }

    pub fn backward(&self, upstream: &Array2<f64>) -> Array2<f64> {
        upstream * (-self.lambda)
    }
}

/// Dropout behaviour of a forward pass.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeededRng),
}

pub(crate) struct HiddenCache {
    act: Array2<f64>,
    mask: Option<Array2<f64>>,
    out: Array2<f64>,
}

pub(crate) struct HeadTrace {
    hidden: Vec<HiddenCache>,
    pub(crate) prob: Array1<f64>,
}

/// Intermediate values of a forward pass needed for backpropagation.
pub(crate) struct Trace {
    trunk: Vec<HiddenCache>,
    pub(crate) heads: Vec<HeadTrace>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense network: shared trunk, then per-head hidden layers and a sigmoid output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: MlpSpec,
    trunk: Vec<LayerShape>,
    heads: Vec<Vec<LayerShape>>,
    params: Vec<f64>,
}

impl Network {
    /// All-zero parameters.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut offset = 0;
        let mut push = |fan_in: usize, fan_out: usize| {
            let shape = LayerShape {
                offset,
                fan_in,
                fan_out,
            };
            offset += shape.len();
            shape
        };
        let mut trunk = Vec::with_capacity(spec.hidden_layers.len());
        let mut width = spec.input_dim;
        for &w in &spec.hidden_layers {
            trunk.push(push(width, w));
            width = w;
        }
        let rep = width;
        let mut heads = Vec::with_capacity(spec.heads.len());
        for head in &spec.heads {
            let mut layers = Vec::with_capacity(head.layers.len() + 1);
            let mut width = rep;
            for &w in &head.layers {
                layers.push(push(width, w));
                width = w;
            }
            layers.push(push(width, 1));
            heads.push(layers);
        }
        Ok(Network {
            spec,
            trunk,
            heads,
            params: vec![0.0; offset],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut SeededRng) -> Result<Self> {
        let mut net = Network::zeros(spec)?;
        let layers: Vec<LayerShape> = net.layers().copied().collect();
        for l in layers {
            let limit = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for p in &mut net.params[l.offset..l.offset + l.weight_len()] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Layers in storage order: trunk first, then each head in declaration order.
    pub fn layers(&self) -> impl Iterator<Item = &LayerShape> {
        self.trunk.iter().chain(self.heads.iter().flatten())
    }

    pub fn trunk_layers(&self) -> &[LayerShape] {
        &self.trunk
    }

    pub fn head_layers(&self, head: usize) -> &[LayerShape] {
        &self.heads[head]
    }

    pub(crate) fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    fn weights(&self, l: &LayerShape) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (l.fan_in, l.fan_out),
            &self.params[l.offset..l.offset + l.weight_len()],
        )
        .expect("layer layout is consistent")
    }

    fn bias(&self, l: &LayerShape) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[l.bias_range()])
    }

    fn affine(&self, l: &LayerShape, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights(l));
        z += &self.bias(l);
        z
    }

    fn hidden(&self, l: &LayerShape, input: ArrayView2<'_, f64>, mode: &mut Mode<'_>) -> HiddenCache {
        let act_fn = self.spec.activation;
        let mut act = self.affine(l, input);
        act.mapv_inplace(|z| act_fn.apply(z));
        let rate = self.spec.dropout_rate;
        match mode {
            Mode::Train(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask = Array2::from_shape_fn(act.dim(), |_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                });
                let out = &act * &mask;
                HiddenCache {
                    act,
                    mask: Some(mask),
                    out,
                }
            }
            _ => HiddenCache {
                out: act.clone(),
                act,
                mask: None,
            },
        }
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, x: ArrayView2<'_, f64>, mut mode: Mode<'_>) -> Result<Trace> {
        self.check_input(x)?;
        let mut trunk: Vec<HiddenCache> = Vec::with_capacity(self.trunk.len());
        for l in &self.trunk {
            let input = trunk.last().map_or(x, |c| c.out.view());
            let cache = self.hidden(l, input, &mut mode);
            trunk.push(cache);
        }
        let rep = trunk.last().map_or(x, |c| c.out.view());
        let mut heads = Vec::with_capacity(self.heads.len());
        for layers in &self.heads {
            let (last, hidden_layers) = layers.split_last().expect("head has an output layer");
            let mut hidden: Vec<HiddenCache> = Vec::with_capacity(hidden_layers.len());
            for l in hidden_layers {
                let input = hidden.last().map_or(rep, |c| c.out.view());
                let cache = self.hidden(l, input, &mut mode);
                hidden.push(cache);
            }
            let input = hidden.last().map_or(rep, |c| c.out.view());
            let logits = self.affine(last, input);
            let prob = logits.column(0).mapv(sigmoid);
            heads.push(HeadTrace { hidden, prob });
        }
        Ok(Trace { trunk, heads })
    }

    /// Per-head probabilities for every row of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>, mode: Mode<'_>) -> Result<Vec<Array1<f64>>> {
        Ok(self
            .forward_trace(x, mode)?
            .heads
            .into_iter()
            .map(|h| h.prob)
            .collect())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array1<f64>>> {
        self.forward(x, Mode::Eval)
    }

    fn backprop_layer(
        &self,
        l: &LayerShape,
        input: ArrayView2<'_, f64>,
        delta: &Array2<f64>,
        grads: &mut [f64],
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let gw = input.t().dot(delta);
        let (wpart, rest) = grads[l.offset..l.offset + l.len()].split_at_mut(l.weight_len());
        ArrayViewMut2::from_shape((l.fan_in, l.fan_out), wpart)
            .expect("layer layout is consistent")
            .assign(&gw);
        ArrayViewMut1::from(rest).assign(&delta.sum_axis(Axis(0)));
        need_input_grad.then(|| delta.dot(&self.weights(l).t()))
    }

    fn through_hidden(act_fn: Activation, cache: &HiddenCache, upstream: Array2<f64>) -> Array2<f64> {
        let mut delta = upstream;
        if let Some(mask) = &cache.mask {
            delta *= mask;
        }
        ndarray::Zip::from(&mut delta)
            .and(&cache.act)
            .for_each(|d, &a| *d *= act_fn.derivative_from_output(a));
        delta
    }

    /// Gradient of the loss with respect to all parameters.
    ///
    /// `dlogits[h]` is the derivative of the loss with respect to head `h`'s pre-sigmoid output.
    /// Heads with a reversal strength send `-lambda * reversal_scale` times their gradient into
    /// the shared trunk.
    pub(crate) fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        trace: &Trace,
        dlogits: &[Array1<f64>],
        reversal_scale: f64,
    ) -> Vec<f64> {
        let act_fn = self.spec.activation;
        let mut grads = vec![0.0; self.params.len()];
        let rep = trace.trunk.last().map_or(x, |c| c.out.view());
        let mut rep_delta: Option<Array2<f64>> = None;
        let need_rep = !self.trunk.is_empty();

        for (h, (layers, head)) in self.heads.iter().zip(&trace.heads).enumerate() {
            let (last, hidden_layers) = layers.split_last().expect("head has an output layer");
            let mut delta = dlogits[h].view().insert_axis(Axis(1)).to_owned();
            let input = head.hidden.last().map_or(rep, |c| c.out.view());
            let need = need_rep || !hidden_layers.is_empty();
            let mut upstream = self.backprop_layer(last, input, &delta, &mut grads, need);
            for (i, l) in hidden_layers.iter().enumerate().rev() {
                delta = Self::through_hidden(act_fn, &head.hidden[i], upstream.take().unwrap());
                let input = if i == 0 { rep } else { head.hidden[i - 1].out.view() };
                upstream = self.backprop_layer(l, input, &delta, &mut grads, need_rep || i > 0);
            }
            if let Some(mut g) = upstream.filter(|_| need_rep) {
                if let Some(lambda) = self.spec.heads[h].reversal {
                    let rev = GradientReversal {
                        lambda: lambda * reversal_scale,
                    };
                    g = rev.backward(&g);
                }
                match rep_delta.as_mut() {
                    Some(acc) => *acc += &g,
                    None => rep_delta = Some(g),
                }
            }
        }

        if let Some(mut upstream) = rep_delta {
            for (i, l) in self.trunk.iter().enumerate().rev() {
                let delta = Self::through_hidden(act_fn, &trace.trunk[i], upstream);
                let input = if i == 0 { x } else { trace.trunk[i - 1].out.view() };
                match self.backprop_layer(l, input, &delta, &mut grads, i > 0) {
                    Some(g) => upstream = g,
                    None => break,
                }
            }
        }
        grads
    }
}
