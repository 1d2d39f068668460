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

//! Batched multiply kernels shared by all layer kinds.
//!
//! Every kernel accumulates an output entry in ascending order of the summed
//! index, starting from the value already in the output buffer. Blocking
//! over weight rows or samples only decides what stays in cache, never the
//! summation order. Samples are processed in fixed-size chunks so the working
//! set of a large batch stays cache resident, and each weight block is
//! reused by every sample of a chunk.

use crate::matrix::axpy;
use crate::scalar::Scalar;

const TILE: usize = 8;
/// Target size of the weight block kept hot while samples stream past.
const BLOCK_BYTES: usize = 32 * 1024;
/// Samples streamed past one weight block before moving to the next.
const SAMPLE_BLOCK: usize = 64;

fn block_rows<T: Scalar>(row_width: usize, rows: usize) -> usize {
    (BLOCK_BYTES / (row_width.max(1) * T::BYTES)).clamp(1, rows.max(1))
}

/// Strided view of a rectangular region of a row-major buffer.
#[derive(Clone, Copy, Debug)]
pub struct Region {
    pub stride: usize,
    pub offset: usize,
    pub width: usize,
}

impl Region {
    pub fn full(width: usize) -> Self {
        Self {
            stride: width,
            offset: 0,
            width,
        }
    }

    #[inline]
    fn range(&self, sample: usize) -> std::ops::Range<usize> {
        let start = sample * self.stride + self.offset;
        start..start + self.width
    }
}

/// `out[s, :] += x[s, :] · w` for every sample `s`, where `w` is
/// `x.width x out.width` row-major. Zero inputs are skipped when requested.
pub fn forward_acc<T: Scalar>(
    x: &[T],
    xr: Region,
    w: &[T],
    out: &mut [T],
    outr: Region,
    batch: usize,
    skip_zeros: bool,
) {
    debug_assert_eq!(w.len(), xr.width * outr.width);
    let kb = block_rows::<T>(outr.width, xr.width);
    for s0 in (0..batch).step_by(SAMPLE_BLOCK) {
        let s1 = (s0 + SAMPLE_BLOCK).min(batch);
        for k0 in (0..xr.width).step_by(kb) {
            let k1 = (k0 + kb).min(xr.width);
            for s in s0..s1 {
                let xs = &x[xr.range(s)];
                let o = &mut out[outr.range(s)];
                for k in k0..k1 {
                    let a = xs[k];
                    if skip_zeros && a == T::ZERO {
                        continue;
                    }
                    axpy(o, a, &w[k * outr.width..(k + 1) * outr.width]);
                }
            }
        }
    }
}

/// `dw += xᵀ · g`, summing over samples in ascending order.
pub fn weight_grad_acc<T: Scalar>(
    x: &[T],
    xr: Region,
    g: &[T],
    gr: Region,
    dw: &mut [T],
    batch: usize,
    skip_zeros: bool,
) {
    debug_assert_eq!(dw.len(), xr.width * gr.width);
    let kb = block_rows::<T>(gr.width, xr.width);
    for s0 in (0..batch).step_by(SAMPLE_BLOCK) {
        let s1 = (s0 + SAMPLE_BLOCK).min(batch);
        for k0 in (0..xr.width).step_by(kb) {
            let k1 = (k0 + kb).min(xr.width);
            for s in s0..s1 {
                let xs = &x[xr.range(s)];
                let gs = &g[gr.range(s)];
                for k in k0..k1 {
                    let a = xs[k];
                    if skip_zeros && a == T::ZERO {
                        continue;
                    }
                    axpy(&mut dw[k * gr.width..(k + 1) * gr.width], a, gs);
                }
            }
        }
    }
}

/// `dx[s, k] = Σ_j w[k, j] · g[s, j]`, overwriting `dx`.
pub fn input_grad<T: Scalar>(
    g: &[T],
    gr: Region,
    w: &[T],
    dx: &mut [T],
    dxr: Region,
    batch: usize,
) {
    debug_assert_eq!(w.len(), dxr.width * gr.width);
    for s0 in (0..batch).step_by(TILE) {
        let s1 = (s0 + TILE).min(batch);
        for k in 0..dxr.width {
            let wrow = &w[k * gr.width..(k + 1) * gr.width];
            for s in s0..s1 {
                dx[dxr.range(s)][k] = crate::matrix::dot(wrow, &g[gr.range(s)]);
            }
        }
    }
}

/// `out[s, :] += b` for every sample.
pub fn add_bias<T: Scalar>(out: &mut [T], width: usize, bias: &[T]) {
    for row in out.chunks_exact_mut(width) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// Column sums of `g`, in ascending sample order.
pub fn bias_grad_acc<T: Scalar>(g: &[T], width: usize, db: &mut [T]) {
    for row in g.chunks_exact(width) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
}
