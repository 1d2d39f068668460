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

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::init;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MASK_ATTEMPTS: usize = 8;

/// Fixed sparse connectivity, stored row-compressed by input index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PruneMask {
    inputs: usize,
    outputs: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl PruneMask {
    fn from_dense(inputs: usize, outputs: usize, dense: &[bool]) -> Self {
        let mut row_ptr = Vec::with_capacity(inputs + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for i in 0..inputs {
            for o in 0..outputs {
                if dense[i * outputs + o] {
                    cols.push(o as u32);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            inputs,
            outputs,
            row_ptr,
            cols,
        }
    }

    pub(crate) fn from_parts(
        inputs: usize,
        outputs: usize,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
    ) -> Result<Self> {
        let ok = row_ptr.len() == inputs + 1
            && row_ptr.first() == Some(&0)
            && row_ptr.last() == Some(&cols.len())
            && row_ptr.windows(2).all(|w| w[0] <= w[1])
            && cols.iter().all(|&c| (c as usize) < outputs)
            && (0..inputs).all(|i| {
                cols[row_ptr[i]..row_ptr[i + 1]]
                    .windows(2)
                    .all(|w| w[0] < w[1])
            });
        if !ok {
            return Err(Error::Checkpoint("malformed pruning mask".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            row_ptr,
            cols,
        })
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub(crate) fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub(crate) fn col_indices(&self) -> &[u32] {
        &self.cols
    }

    pub fn contains(&self, i: usize, o: usize) -> bool {
        self.row(i).binary_search(&(o as u32)).is_ok()
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut d = vec![false; self.inputs * self.outputs];
        for i in 0..self.inputs {
            for &o in self.row(i) {
                d[i * self.outputs + o as usize] = true;
            }
        }
        d
    }

    /// Every input has at least one connection and every output is reached.
    pub fn has_full_coverage(&self) -> bool {
        let mut col_hit = vec![false; self.outputs];
        for &c in &self.cols {
            col_hit[c as usize] = true;
        }
        (0..self.inputs).all(|i| self.row_ptr[i + 1] > self.row_ptr[i])
            && col_hit.into_iter().all(|h| h)
    }
}

fn covered(inputs: usize, outputs: usize, dense: &[bool]) -> bool {
    let rows_ok = dense.chunks_exact(outputs).all(|r| r.iter().any(|&b| b));
    let cols_ok = (0..outputs).all(|o| (0..inputs).any(|i| dense[i * outputs + o]));
    rows_ok && cols_ok
}

/// Draws an i.i.d. Bernoulli(`density`) mask with full row and column
/// coverage. After a bounded number of redraws, empty rows and columns of the
/// last draw are repaired by adding one random entry each.
pub fn generate_mask(
    inputs: usize,
    outputs: usize,
    density: f64,
    rng: &mut init::LayerRng,
) -> Result<PruneMask> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidDensity(density));
    }
    let mut dense = vec![false; inputs * outputs];
    for _ in 0..MASK_ATTEMPTS {
        for b in dense.iter_mut() {
            *b = rng.gen_bool(density);
        }
        if covered(inputs, outputs, &dense) {
            return Ok(PruneMask::from_dense(inputs, outputs, &dense));
        }
    }
    for i in 0..inputs {
        if !dense[i * outputs..(i + 1) * outputs].iter().any(|&b| b) {
            let o = rng.gen_range(0..outputs);
            dense[i * outputs + o] = true;
        }
    }
    for o in 0..outputs {
        if !(0..inputs).any(|i| dense[i * outputs + o]) {
            let i = rng.gen_range(0..inputs);
            dense[i * outputs + o] = true;
        }
    }
    Ok(PruneMask::from_dense(inputs, outputs, &dense))
}

/// A-priori pruned layer: a dense `in x out` layer restricted to a fixed mask.
/// Only masked-in weights are stored, so the sparsity pattern can never change.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedLayer<T> {
    pub(crate) mask: PruneMask,
    pub(crate) values: Vec<T>,
    pub(crate) density: f64,
    pub(crate) seed: u64,
}

impl<T: Scalar> PrunedLayer<T> {
    pub fn new(inputs: usize, outputs: usize, density: f64, seed: u64) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::DimensionMismatch {
                context: "pruned layer width",
                expected: 1,
                found: 0,
            });
        }
        let mut rng = init::rng(seed);
        let mask = generate_mask(inputs, outputs, density, &mut rng)?;
        let fan_in = mask.nnz() as f64 / outputs as f64;
        let fan_out = mask.nnz() as f64 / inputs as f64;
        let values = init::uniform_fill(&mut rng, mask.nnz(), init::glorot_limit(fan_in, fan_out));
        Ok(Self {
            mask,
            values,
            density,
            seed,
        })
    }

    pub(crate) fn from_parts(
        mask: PruneMask,
        values: Vec<T>,
        density: f64,
        seed: u64,
    ) -> Result<Self> {
        if values.len() != mask.nnz() {
            return Err(Error::DimensionMismatch {
                context: "pruned values",
                expected: mask.nnz(),
                found: values.len(),
            });
        }
        Ok(Self {
            mask,
            values,
            density,
            seed,
        })
    }

    pub fn inputs(&self) -> usize {
        self.mask.inputs
    }

    pub fn outputs(&self) -> usize {
        self.mask.outputs
    }

    pub fn mask(&self) -> &PruneMask {
        &self.mask
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Densified weight matrix with zeros outside the mask.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.inputs(), self.outputs());
        for i in 0..self.inputs() {
            let start = self.mask.row_ptr[i];
            for (e, &o) in self.mask.row(i).iter().enumerate() {
                m.set(i, o as usize, self.values[start + e]);
            }
        }
        m
    }

    pub(crate) fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.rows(), self.outputs());
        for s in 0..x.rows() {
            let xrow = x.row(s);
            let orow = out.row_mut(s);
            for (i, &a) in xrow.iter().enumerate() {
                if a == T::ZERO {
                    continue;
                }
                let (lo, hi) = (self.mask.row_ptr[i], self.mask.row_ptr[i + 1]);
                for (&o, &w) in self.mask.cols[lo..hi].iter().zip(&self.values[lo..hi]) {
                    orow[o as usize] += a * w;
                }
            }
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
        let dvals = &mut grads[0];
        for s in 0..x.rows() {
            let grow = dy.row(s);
            for (i, &a) in x.row(s).iter().enumerate() {
                if a == T::ZERO {
                    continue;
                }
                let (lo, hi) = (self.mask.row_ptr[i], self.mask.row_ptr[i + 1]);
                for (&o, d) in self.mask.cols[lo..hi].iter().zip(&mut dvals[lo..hi]) {
                    *d += a * grow[o as usize];
                }
            }
        }
        want_input_grad.then(|| {
            let mut dx = Matrix::zeros(x.rows(), self.inputs());
            for s in 0..x.rows() {
                let grow = dy.row(s);
                let dxrow = dx.row_mut(s);
                for (i, d) in dxrow.iter_mut().enumerate() {
                    let (lo, hi) = (self.mask.row_ptr[i], self.mask.row_ptr[i + 1]);
                    let mut acc = T::ZERO;
                    for (&o, &w) in self.mask.cols[lo..hi].iter().zip(&self.values[lo..hi]) {
                        acc += w * grow[o as usize];
                    }
                    *d = acc;
                }
            }
            dx
        })
    }

    /// Scatters a gradient over the stored values into a dense `in x out`
    /// buffer, zero outside the mask.
    pub fn densify_grad(&self, grad: &[T]) -> Matrix<T> {
        let mut m = Matrix::zeros(self.inputs(), self.outputs());
        for i in 0..self.inputs() {
            let start = self.mask.row_ptr[i];
            for (e, &o) in self.mask.row(i).iter().enumerate() {
                m.set(i, o as usize, grad[start + e]);
            }
        }
        m
    }

    pub(crate) fn params(&self) -> Vec<&[T]> {
        vec![&self.values]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [T]> {
        vec![&mut self.values]
    }
}
