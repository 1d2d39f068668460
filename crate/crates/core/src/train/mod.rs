// Copyright 2026 The closnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Forward/backward passes over a layer stack, SGD, and training loops.

mod gradcheck;
mod sgd;
mod trainer;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use sgd::{sgd_step, Sgd};
pub use trainer::{evaluate, train, EpochRecord, Precision, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::layers::{Activation, Layer, LayerCache, ParamCount};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// An ordered stack of layers with ReLU between consecutive layers and a
/// softmax cross-entropy head on the final layer's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::DimensionMismatch {
                    context: "adjacent layer widths",
                    expected: w[0].outputs(),
                    found: w[1].inputs(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn hidden_activation(&self) -> Activation {
        Activation::Relu
    }

    pub fn param_count(&self) -> ParamCount {
        self.layers
            .iter()
            .map(Layer::param_count)
            .fold(ParamCount::default(), |a, b| a + b)
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            layers: self.layers.iter().map(Layer::zero_grads).collect(),
        }
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut a = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            relu_in_place(&mut a);
            a = layer.forward(&a)?;
        }
        Ok(a)
    }
}

/// Per-layer gradient tensors, laid out like [`Layer::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn flat(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| l.iter().map(Vec::as_slice))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|t| t.iter().all(|&v| v == T::ZERO))
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub layers: Vec<LayerCache<T>>,
    /// Output of each non-final layer before the hidden ReLU.
    pub pre_activations: Vec<Matrix<T>>,
    pub batch: usize,
}

fn relu_in_place<T: Scalar>(m: &mut Matrix<T>) {
    for v in m.as_mut_slice() {
        *v = Activation::Relu.apply(*v);
    }
}

pub fn forward_model<T: Scalar>(
    model: &Model<T>,
    batch: &Matrix<T>,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    forward_model_owned(model, batch.clone())
}

/// Like [`forward_model`], moving the batch into the cache.
pub fn forward_model_owned<T: Scalar>(
    model: &Model<T>,
    batch: Matrix<T>,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    let n = model.layers.len();
    let rows = batch.rows();
    let mut caches = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n - 1);
    let (mut a, c) = model.layers[0].forward_owned(batch)?;
    caches.push(c);
    for layer in &model.layers[1..] {
        let mut post = a.clone();
        relu_in_place(&mut post);
        pre.push(a);
        let (out, c) = layer.forward_owned(post)?;
        caches.push(c);
        a = out;
    }
    Ok((
        a,
        ForwardCache {
            layers: caches,
            pre_activations: pre,
            batch: rows,
        },
    ))
}

pub fn loss_softmax_xent<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
) -> Result<(f64, Matrix<T>)> {
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch {
            context: "labels per batch",
            expected: logits.rows(),
            found: labels.len(),
        });
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let batch = logits.rows();
    let inv_batch = T::ONE / T::from_f64(batch as f64);
    let mut grad = Matrix::zeros(batch, classes);
    let mut total = 0.0f64;
    for (s, &label) in labels.iter().enumerate() {
        let row = logits.row(s);
        let max = row
            .iter()
            .copied()
            .fold(row[0], |m, v| if v > m { v } else { m });
        let mut sum = T::ZERO;
        for &v in row {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln();
        total += (log_sum - (row[label] - max)).to_f64();
        let grow = grad.row_mut(s);
        for (c, g) in grow.iter_mut().enumerate() {
            let p = (row[c] - max).exp() / sum;
            let target = if c == label { T::ONE } else { T::ZERO };
            *g = (p - target) * inv_batch;
        }
    }
    Ok((total / batch as f64, grad))
}

pub fn backward_model<T: Scalar>(
    model: &Model<T>,
    cache: &ForwardCache<T>,
    dlogits: &Matrix<T>,
) -> Result<Gradients<T>> {
    if cache.layers.len() != model.layers.len()
        || cache.pre_activations.len() + 1 != model.layers.len()
    {
        return Err(Error::StaleCache(
            "cache was produced by a different model".into(),
        ));
    }
    if dlogits.rows() != cache.batch || dlogits.cols() != model.classes() {
        return Err(Error::StaleCache(format!(
            "logit gradient is {}x{}, expected {}x{}",
            dlogits.rows(),
            dlogits.cols(),
            cache.batch,
            model.classes()
        )));
    }
    let mut grads = model.zero_grads();
    let mut upstream = dlogits.clone();
    for l in (0..model.layers.len()).rev() {
        let dx =
            model.layers[l].backward(&cache.layers[l], &upstream, &mut grads.layers[l], l > 0)?;
        if l > 0 {
            let mut dx = dx.expect("requested");
            let pre = &cache.pre_activations[l - 1];
            for (g, &p) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *g = Activation::Relu.backprop(p, *g);
            }
            upstream = dx;
        }
    }
    Ok(grads)
}

/// Index of the largest logit in each row; ties go to the lowest index.
pub fn argmax_rows<T: Scalar>(logits: &Matrix<T>) -> Vec<usize> {
    (0..logits.rows())
        .map(|s| {
            let row = logits.row(s);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
