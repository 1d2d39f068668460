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
use crate::scalar::Scalar;
use crate::train::{Gradients, Model};

/// One SGD-with-momentum update over matching tensors:
/// `v <- momentum * v - lr * g`, then `w <- w + v`.
pub fn sgd_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    velocity: &mut [Vec<T>],
    lr: T,
    momentum: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::DimensionMismatch {
            context: "sgd tensor count",
            expected: params.len(),
            found: grads.len().min(velocity.len()),
        });
    }
    for ((w, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if w.len() != g.len() || w.len() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "sgd tensor length",
                expected: w.len(),
                found: g.len(),
            });
        }
        for ((wi, &gi), vi) in w.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vi = momentum * *vi - lr * gi;
            *wi += *vi;
        }
    }
    Ok(())
}

/// SGD with momentum, owning the velocity buffers for one model.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(model: &Model<T>, lr: T, momentum: T) -> Self {
        Self {
            lr,
            momentum,
            velocity: model
                .params()
                .iter()
                .map(|p| vec![T::ZERO; p.len()])
                .collect(),
        }
    }

    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>) -> Result<()> {
        let mut params = model.params_mut();
        sgd_step(
            &mut params,
            &grads.flat(),
            &mut self.velocity,
            self.lr,
            self.momentum,
        )
    }
}
