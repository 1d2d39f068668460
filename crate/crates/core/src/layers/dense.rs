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

use crate::error::{Error, Result};
use crate::layers::init;
use crate::layers::kernels::{self, Region};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Fully-connected baseline: `y = x·W + b`, with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub(crate) weight: Matrix<T>,
    pub(crate) bias: Option<Vec<T>>,
    pub(crate) seed: u64,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(inputs: usize, outputs: usize, with_bias: bool, seed: u64) -> Self {
        let mut rng = init::rng(seed);
        let limit = init::glorot_limit(inputs as f64, outputs as f64);
        let data = init::uniform_fill(&mut rng, inputs * outputs, limit);
        Self {
            weight: Matrix::from_vec(inputs, outputs, data).expect("sized"),
            bias: with_bias.then(|| vec![T::ZERO; outputs]),
            seed,
        }
    }

    pub fn from_weights(weight: Matrix<T>, bias: Option<Vec<T>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.cols() {
                return Err(Error::DimensionMismatch {
                    context: "dense bias",
                    expected: weight.cols(),
                    found: b.len(),
                });
            }
        }
        Ok(Self {
            weight,
            bias,
            seed: 0,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix<T> {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub(crate) fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let (i, o) = (self.inputs(), self.outputs());
        let mut out = Matrix::zeros(x.rows(), o);
        kernels::forward_acc(
            x.as_slice(),
            Region::full(i),
            self.weight.as_slice(),
            out.as_mut_slice(),
            Region::full(o),
            x.rows(),
            true,
        );
        if let Some(b) = &self.bias {
            kernels::add_bias(out.as_mut_slice(), o, b);
        }
        out
    }

    pub(crate) fn backward(
        &self,
        x: &Matrix<T>,
        dy: &Matrix<T>,
        grads: &mut [Vec<T>],
        want_input_grad: bool,
    ) -> Option<Matrix<T>> {
        let (i, o) = (self.inputs(), self.outputs());
        kernels::weight_grad_acc(
            x.as_slice(),
            Region::full(i),
            dy.as_slice(),
            Region::full(o),
            &mut grads[0],
            x.rows(),
            true,
        );
        if self.bias.is_some() {
            kernels::bias_grad_acc(dy.as_slice(), o, &mut grads[1]);
        }
        want_input_grad.then(|| {
            let mut dx = Matrix::zeros(x.rows(), i);
            kernels::input_grad(
                dy.as_slice(),
                Region::full(o),
                self.weight.as_slice(),
                dx.as_mut_slice(),
                Region::full(i),
                x.rows(),
            );
            dx
        })
    }

    pub(crate) fn params(&self) -> Vec<&[T]> {
        let mut p = vec![self.weight.as_slice()];
        if let Some(b) = &self.bias {
            p.push(b);
        }
        p
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p = vec![self.weight.as_mut_slice()];
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }
}
