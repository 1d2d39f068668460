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

use crate::layers::init;
use crate::layers::kernels::{self, Region};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Rank-`r` factorization `y = (x·U)·V` with `U: in x r`, `V: r x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankLayer<T> {
    pub(crate) u: Matrix<T>,
    pub(crate) v: Matrix<T>,
    pub(crate) seed: u64,
}

impl<T: Scalar> LowRankLayer<T> {
    pub fn new(inputs: usize, outputs: usize, rank: usize, seed: u64) -> Self {
        let mut rng = init::rng(seed);
        let lu = init::glorot_limit(inputs as f64, rank as f64);
        let u = init::uniform_fill(&mut rng, inputs * rank, lu);
        let lv = init::glorot_limit(rank as f64, outputs as f64);
        let v = init::uniform_fill(&mut rng, rank * outputs, lv);
        Self {
            u: Matrix::from_vec(inputs, rank, u).expect("sized"),
            v: Matrix::from_vec(rank, outputs, v).expect("sized"),
            seed,
        }
    }

    pub fn inputs(&self) -> usize {
        self.u.rows()
    }

    pub fn outputs(&self) -> usize {
        self.v.cols()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn factors(&self) -> (&Matrix<T>, &Matrix<T>) {
        (&self.u, &self.v)
    }

    /// Returns `(hidden, output)`.
    pub(crate) fn forward(&self, x: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
        let (i, r, o) = (self.inputs(), self.rank(), self.outputs());
        let mut h = Matrix::zeros(x.rows(), r);
        kernels::forward_acc(
            x.as_slice(),
            Region::full(i),
            self.u.as_slice(),
            h.as_mut_slice(),
            Region::full(r),
            x.rows(),
            true,
        );
        let mut y = Matrix::zeros(x.rows(), o);
        kernels::forward_acc(
            h.as_slice(),
            Region::full(r),
            self.v.as_slice(),
            y.as_mut_slice(),
            Region::full(o),
            x.rows(),
            false,
        );
        (h, y)
    }

    pub(crate) fn backward(
        &self,
        x: &Matrix<T>,
        h: &Matrix<T>,
        dy: &Matrix<T>,
        grads: &mut [Vec<T>],
        want_input_grad: bool,
    ) -> Option<Matrix<T>> {
        let (i, r, o) = (self.inputs(), self.rank(), self.outputs());
        let batch = x.rows();
        kernels::weight_grad_acc(
            h.as_slice(),
            Region::full(r),
            dy.as_slice(),
            Region::full(o),
            &mut grads[1],
            batch,
            false,
        );
        let mut dh = Matrix::zeros(batch, r);
        kernels::input_grad(
            dy.as_slice(),
            Region::full(o),
            self.v.as_slice(),
            dh.as_mut_slice(),
            Region::full(r),
            batch,
        );
        kernels::weight_grad_acc(
            x.as_slice(),
            Region::full(i),
            dh.as_slice(),
            Region::full(r),
            &mut grads[0],
            batch,
            true,
        );
        want_input_grad.then(|| {
            let mut dx = Matrix::zeros(batch, i);
            kernels::input_grad(
                dh.as_slice(),
                Region::full(r),
                self.u.as_slice(),
                dx.as_mut_slice(),
                Region::full(i),
                batch,
            );
            dx
        })
    }

    pub(crate) fn params(&self) -> Vec<&[T]> {
        vec![self.u.as_slice(), self.v.as_slice()]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.u.as_mut_slice(), self.v.as_mut_slice()]
    }
}
