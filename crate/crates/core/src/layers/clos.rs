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

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::init;
use crate::layers::kernels::{self, Region};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::topology::{build_permutations, ScatterPermutation, StageShape, ValidatedClosSpec};

/// Elementwise nonlinearity applied between Clos stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Activation {
    None,
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::None => v,
            Activation::Relu => {
                if v > T::ZERO {
                    v
                } else {
                    T::ZERO
                }
            }
        }
    }

    /// Gradient through the activation given its pre-activation input.
    #[inline]
    pub fn backprop<T: Scalar>(self, pre: T, grad: T) -> T {
        match self {
            Activation::None => grad,
            Activation::Relu => {
                if pre > T::ZERO {
                    grad
                } else {
                    T::ZERO
                }
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::None => "none",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "linear" => Ok(Activation::None),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// How block weights are initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitRule {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, fans taken per block.
    BlockGlorot,
    /// Every weight set to the given value.
    Constant(f64),
}

/// One Clos stage: a block-diagonal matrix with one dense block per router.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSparseStage<T> {
    shape: StageShape,
    blocks: Vec<Matrix<T>>,
    in_offsets: Vec<usize>,
    out_offsets: Vec<usize>,
}

impl<T: Scalar> BlockSparseStage<T> {
    fn new(shape: &StageShape, init: InitRule, rng: &mut init::LayerRng) -> Self {
        let blocks = shape
            .blocks
            .iter()
            .map(|&(r, c)| {
                let data = match init {
                    InitRule::BlockGlorot => {
                        init::uniform_fill(rng, r * c, init::glorot_limit(r as f64, c as f64))
                    }
                    InitRule::Constant(v) => vec![T::from_f64(v); r * c],
                };
                Matrix::from_vec(r, c, data).expect("sized")
            })
            .collect();
        Self::from_blocks(shape.clone(), blocks).expect("shape-consistent blocks")
    }

    pub(crate) fn from_blocks(shape: StageShape, blocks: Vec<Matrix<T>>) -> Result<Self> {
        if blocks.len() != shape.blocks.len()
            || blocks
                .iter()
                .zip(&shape.blocks)
                .any(|(b, &(r, c))| b.rows() != r || b.cols() != c)
        {
            return Err(Error::DimensionMismatch {
                context: "stage blocks",
                expected: shape.weight_count(),
                found: blocks.iter().map(|b| b.rows() * b.cols()).sum(),
            });
        }
        Ok(Self {
            in_offsets: shape.in_offsets(),
            out_offsets: shape.out_offsets(),
            shape,
            blocks,
        })
    }

    pub fn shape(&self) -> &StageShape {
        &self.shape
    }

    pub fn blocks(&self) -> &[Matrix<T>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.blocks
    }

    pub fn block(&self, b: usize) -> &Matrix<T> {
        &self.blocks[b]
    }

    /// Input index range owned by block `b`.
    pub fn in_range(&self, b: usize) -> std::ops::Range<usize> {
        self.in_offsets[b]..self.in_offsets[b + 1]
    }

    /// Output index range owned by block `b`.
    pub fn out_range(&self, b: usize) -> std::ops::Range<usize> {
        self.out_offsets[b]..self.out_offsets[b + 1]
    }

    pub fn in_width(&self) -> usize {
        *self.in_offsets.last().unwrap()
    }

    pub fn out_width(&self) -> usize {
        *self.out_offsets.last().unwrap()
    }

    pub fn weight_count(&self) -> usize {
        self.blocks.iter().map(|b| b.rows() * b.cols()).sum()
    }

    fn regions(&self, b: usize) -> (Region, Region) {
        (
            Region {
                stride: self.in_width(),
                offset: self.in_offsets[b],
                width: self.in_offsets[b + 1] - self.in_offsets[b],
            },
            Region {
                stride: self.out_width(),
                offset: self.out_offsets[b],
                width: self.out_offsets[b + 1] - self.out_offsets[b],
            },
        )
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.rows(), self.out_width());
        for (b, block) in self.blocks.iter().enumerate() {
            let (xr, outr) = self.regions(b);
            kernels::forward_acc(
                x.as_slice(),
                xr,
                block.as_slice(),
                out.as_mut_slice(),
                outr,
                x.rows(),
                false,
            );
        }
        out
    }

    /// Accumulates block gradients into `grads` (one buffer per block) and
    /// optionally returns the gradient w.r.t. the stage input.
    pub fn backward(
        &self,
        x: &Matrix<T>,
        dy: &Matrix<T>,
        grads: &mut [Vec<T>],
        want_input_grad: bool,
    ) -> Option<Matrix<T>> {
        let batch = x.rows();
        for (b, g) in grads.iter_mut().enumerate().take(self.blocks.len()) {
            let (xr, gr) = self.regions(b);
            kernels::weight_grad_acc(x.as_slice(), xr, dy.as_slice(), gr, g, batch, false);
        }
        want_input_grad.then(|| {
            let mut dx = Matrix::zeros(batch, self.in_width());
            for (b, block) in self.blocks.iter().enumerate() {
                let (xr, gr) = self.regions(b);
                kernels::input_grad(
                    dy.as_slice(),
                    gr,
                    block.as_slice(),
                    dx.as_mut_slice(),
                    xr,
                    batch,
                );
            }
            dx
        })
    }

    /// The stage as a dense `in_width x out_width` matrix.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.in_width(), self.out_width());
        for (b, block) in self.blocks.iter().enumerate() {
            let (r0, c0) = (self.in_offsets[b], self.out_offsets[b]);
            for r in 0..block.rows() {
                for c in 0..block.cols() {
                    m.set(r0 + r, c0 + c, block.get(r, c));
                }
            }
        }
        m
    }
}

/// Intermediate values kept by a Clos forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ClosCache<T> {
    pub input: Matrix<T>,
    /// Permuted stage-1 output, before activation.
    pub pre1: Matrix<T>,
    /// Activated input of stage 2 (absent when activation is none).
    pub post1: Option<Matrix<T>>,
    /// Permuted stage-2 output, before activation.
    pub pre2: Matrix<T>,
    pub post2: Option<Matrix<T>>,
}

impl<T> ClosCache<T> {
    pub fn stage2_input(&self) -> &Matrix<T> {
        self.post1.as_ref().unwrap_or(&self.pre1)
    }

    pub fn stage3_input(&self) -> &Matrix<T> {
        self.post2.as_ref().unwrap_or(&self.pre2)
    }
}

/// A fully-connected layer realized as a three-stage Clos cascade of
/// block-sparse matrices joined by fixed scatter permutations.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosLayer<T> {
    spec: ValidatedClosSpec,
    stages: [BlockSparseStage<T>; 3],
    perms: (ScatterPermutation, ScatterPermutation),
    activation: Activation,
    pub(crate) seed: u64,
}

impl<T: Scalar> ClosLayer<T> {
    pub fn new(
        spec: &ValidatedClosSpec,
        init_rule: InitRule,
        seed: u64,
        activation: Activation,
    ) -> Self {
        let mut rng = init::rng(seed);
        let [s1, s2, s3] = spec.stages();
        let stages = [
            BlockSparseStage::new(s1, init_rule, &mut rng),
            BlockSparseStage::new(s2, init_rule, &mut rng),
            BlockSparseStage::new(s3, init_rule, &mut rng),
        ];
        Self {
            spec: spec.clone(),
            stages,
            perms: build_permutations(spec),
            activation,
            seed,
        }
    }

    pub fn spec(&self) -> &ValidatedClosSpec {
        &self.spec
    }

    pub fn stages(&self) -> &[BlockSparseStage<T>; 3] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [BlockSparseStage<T>; 3] {
        &mut self.stages
    }

    pub fn permutations(&self) -> (&ScatterPermutation, &ScatterPermutation) {
        (&self.perms.0, &self.perms.1)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    pub fn inputs(&self) -> usize {
        self.spec.spec().inputs
    }

    pub fn outputs(&self) -> usize {
        self.spec.spec().outputs
    }

    pub fn weight_count(&self) -> usize {
        self.stages.iter().map(BlockSparseStage::weight_count).sum()
    }

    fn permute(perm: &ScatterPermutation, z: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(z.rows(), z.cols());
        for s in 0..z.rows() {
            perm.apply(z.row(s), out.row_mut(s));
        }
        out
    }

    fn unpermute(perm: &ScatterPermutation, g: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(g.rows(), g.cols());
        for s in 0..g.rows() {
            perm.apply_inverse(g.row(s), out.row_mut(s));
        }
        out
    }

    fn activate(&self, pre: &Matrix<T>) -> Option<Matrix<T>> {
        match self.activation {
            Activation::None => None,
            act => Some(pre.map(|v| act.apply(v))),
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.inputs() {
            return Err(Error::DimensionMismatch {
                context: "Clos layer input width",
                expected: self.inputs(),
                found: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ClosCache<T>)> {
        self.forward_owned(x.clone())
    }

    /// Like [`ClosLayer::forward_cached`], moving `x` into the cache.
    pub fn forward_owned(&self, x: Matrix<T>) -> Result<(Matrix<T>, ClosCache<T>)> {
        self.check_input(&x)?;
        let (y, [pre1, pre2], [post1, post2]) = self.cascade(&x);
        Ok((
            y,
            ClosCache {
                input: x,
                pre1,
                post1,
                pre2,
                post2,
            },
        ))
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        Ok(self.cascade(x).0)
    }

    #[allow(clippy::type_complexity)]
    fn cascade(&self, x: &Matrix<T>) -> (Matrix<T>, [Matrix<T>; 2], [Option<Matrix<T>>; 2]) {
        let z1 = self.stages[0].forward(x);
        let pre1 = Self::permute(&self.perms.0, &z1);
        let post1 = self.activate(&pre1);
        let z2 = self.stages[1].forward(post1.as_ref().unwrap_or(&pre1));
        let pre2 = Self::permute(&self.perms.1, &z2);
        let post2 = self.activate(&pre2);
        let y = self.stages[2].forward(post2.as_ref().unwrap_or(&pre2));
        (y, [pre1, pre2], [post1, post2])
    }

    /// Backpropagates `dy` through the cascade. `grads` holds one buffer per
    /// block across all three stages, in stage order.
    pub fn backward(
        &self,
        cache: &ClosCache<T>,
        dy: &Matrix<T>,
        grads: &mut [Vec<T>],
        want_input_grad: bool,
    ) -> Result<Option<Matrix<T>>> {
        if cache.input.cols() != self.inputs()
            || cache.pre1.cols() != self.stages[0].out_width()
            || cache.pre2.cols() != self.stages[1].out_width()
            || dy.cols() != self.outputs()
            || dy.rows() != cache.input.rows()
        {
            return Err(Error::StaleCache(
                "Clos cache does not match layer or gradient shape".into(),
            ));
        }
        let n1 = self.stages[0].blocks.len();
        let n2 = self.stages[1].blocks.len();
        let (g1, rest) = grads.split_at_mut(n1);
        let (g2, g3) = rest.split_at_mut(n2);

        let da2 = self.stages[2]
            .backward(cache.stage3_input(), dy, g3, true)
            .expect("requested");
        let dpre2 = self.backprop_activation(&cache.pre2, da2);
        let dz2 = Self::unpermute(&self.perms.1, &dpre2);

        let da1 = self.stages[1]
            .backward(cache.stage2_input(), &dz2, g2, true)
            .expect("requested");
        let dpre1 = self.backprop_activation(&cache.pre1, da1);
        let dz1 = Self::unpermute(&self.perms.0, &dpre1);

        Ok(self.stages[0].backward(&cache.input, &dz1, g1, want_input_grad))
    }

    fn backprop_activation(&self, pre: &Matrix<T>, mut grad: Matrix<T>) -> Matrix<T> {
        if self.activation != Activation::None {
            for (g, &p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *g = self.activation.backprop(p, *g);
            }
        }
        grad
    }

    /// The single `I x O` matrix `W_in · P_1 · W_mid · P_2 · W_out` that the
    /// activation-free cascade computes.
    pub fn effective_matrix(&self) -> Result<Matrix<T>> {
        if self.activation != Activation::None {
            return Err(Error::ActivationNotNone);
        }
        let p1 = permutation_matrix::<T>(&self.perms.0);
        let p2 = permutation_matrix::<T>(&self.perms.1);
        self.stages[0]
            .to_dense()
            .matmul(&p1)?
            .matmul(&self.stages[1].to_dense())?
            .matmul(&p2)?
            .matmul(&self.stages[2].to_dense())
    }

    pub(crate) fn params(&self) -> Vec<&[T]> {
        self.stages
            .iter()
            .flat_map(|s| s.blocks.iter().map(Matrix::as_slice))
            .collect()
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.stages
            .iter_mut()
            .flat_map(|s| s.blocks.iter_mut().map(Matrix::as_mut_slice))
            .collect()
    }
}

/// Dense matrix `P` with `P[src, dst] = 1`, so that `x · P` scatters `x`.
fn permutation_matrix<T: Scalar>(perm: &ScatterPermutation) -> Matrix<T> {
    let mut m = Matrix::zeros(perm.len(), perm.len());
    for (src, &dst) in perm.mapping().iter().enumerate() {
        m.set(src, dst, T::ONE);
    }
    m
}
