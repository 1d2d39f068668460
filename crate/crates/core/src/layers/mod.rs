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

//! Trainable fully-connected layers sharing one forward/backward contract.

mod clos;
mod dense;
pub(crate) mod init;
pub mod kernels;
mod lowrank;
mod pruned;

pub use clos::{Activation, BlockSparseStage, ClosCache, ClosLayer, InitRule};
pub use dense::DenseLayer;
pub use lowrank::LowRankLayer;
pub use pruned::{generate_mask, PruneMask, PrunedLayer};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::topology::ValidatedClosSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense,
    LowRank,
    Pruned,
    Clos,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::LowRank => "lowrank",
            LayerKind::Pruned => "pruned",
            LayerKind::Clos => "clos",
        }
    }
}

// A model holds a handful of layers, so boxing the large variant buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Dense(DenseLayer<T>),
    LowRank(LowRankLayer<T>),
    Pruned(PrunedLayer<T>),
    Clos(ClosLayer<T>),
}

/// Storage accounting for one layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamCount {
    /// Trainable weights, excluding biases.
    pub weights: usize,
    pub biases: usize,
    /// Connection indices that must be stored alongside the weights.
    pub index_overhead: usize,
}

impl ParamCount {
    pub fn trainable(&self) -> usize {
        self.weights + self.biases
    }
}

impl std::ops::Add for ParamCount {
    type Output = ParamCount;

    fn add(self, rhs: ParamCount) -> ParamCount {
        ParamCount {
            weights: self.weights + rhs.weights,
            biases: self.biases + rhs.biases,
            index_overhead: self.index_overhead + rhs.index_overhead,
        }
    }
}

/// Values a layer's forward pass keeps for its backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache<T> {
    Input(Matrix<T>),
    LowRank { input: Matrix<T>, hidden: Matrix<T> },
    Clos(ClosCache<T>),
}

impl<T> LayerCache<T> {
    pub fn input(&self) -> &Matrix<T> {
        match self {
            LayerCache::Input(x) => x,
            LayerCache::LowRank { input, .. } => input,
            LayerCache::Clos(c) => &c.input,
        }
    }
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::LowRank(_) => LayerKind::LowRank,
            Layer::Pruned(_) => LayerKind::Pruned,
            Layer::Clos(_) => LayerKind::Clos,
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Layer::Dense(l) => l.inputs(),
            Layer::LowRank(l) => l.inputs(),
            Layer::Pruned(l) => l.inputs(),
            Layer::Clos(l) => l.inputs(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            Layer::Dense(l) => l.outputs(),
            Layer::LowRank(l) => l.outputs(),
            Layer::Pruned(l) => l.outputs(),
            Layer::Clos(l) => l.outputs(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Layer::Dense(l) => l.seed,
            Layer::LowRank(l) => l.seed,
            Layer::Pruned(l) => l.seed,
            Layer::Clos(l) => l.seed,
        }
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.inputs() {
            return Err(Error::DimensionMismatch {
                context: "layer input width",
                expected: self.inputs(),
                found: x.cols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        Ok(match self {
            Layer::Dense(l) => l.forward(x),
            Layer::LowRank(l) => l.forward(x).1,
            Layer::Pruned(l) => l.forward(x),
            Layer::Clos(l) => l.forward(x)?,
        })
    }

    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<(Matrix<T>, LayerCache<T>)> {
        self.forward_owned(x.clone())
    }

    /// Like [`Layer::forward_cached`], moving `x` into the cache instead of
    /// copying it.
    pub fn forward_owned(&self, x: Matrix<T>) -> Result<(Matrix<T>, LayerCache<T>)> {
        self.check_input(&x)?;
        Ok(match self {
            Layer::Dense(l) => (l.forward(&x), LayerCache::Input(x)),
            Layer::LowRank(l) => {
                let (hidden, y) = l.forward(&x);
                (y, LayerCache::LowRank { input: x, hidden })
            }
            Layer::Pruned(l) => (l.forward(&x), LayerCache::Input(x)),
            Layer::Clos(l) => {
                let (y, c) = l.forward_owned(x)?;
                (y, LayerCache::Clos(c))
            }
        })
    }

    /// Accumulates parameter gradients into `grads` (laid out like
    /// [`Layer::params`]) and returns the input gradient when requested.
    pub fn backward(
        &self,
        cache: &LayerCache<T>,
        dy: &Matrix<T>,
        grads: &mut [Vec<T>],
        want_input_grad: bool,
    ) -> Result<Option<Matrix<T>>> {
        let x = cache.input();
        if x.cols() != self.inputs() || dy.cols() != self.outputs() || dy.rows() != x.rows() {
            return Err(Error::StaleCache(format!(
                "cache {}x{} / gradient {}x{} do not match layer {}->{}",
                x.rows(),
                x.cols(),
                dy.rows(),
                dy.cols(),
                self.inputs(),
                self.outputs()
            )));
        }
        let shapes_ok = grads.len() == self.params().len()
            && grads
                .iter()
                .zip(self.params())
                .all(|(g, p)| g.len() == p.len());
        if !shapes_ok {
            return Err(Error::StaleCache(
                "gradient buffers do not match parameters".into(),
            ));
        }
        Ok(match (self, cache) {
            (Layer::Dense(l), LayerCache::Input(x)) => l.backward(x, dy, grads, want_input_grad),
            (Layer::LowRank(l), LayerCache::LowRank { input, hidden }) => {
                l.backward(input, hidden, dy, grads, want_input_grad)
            }
            (Layer::Pruned(l), LayerCache::Input(x)) => l.backward(x, dy, grads, want_input_grad),
            (Layer::Clos(l), LayerCache::Clos(c)) => l.backward(c, dy, grads, want_input_grad)?,
            _ => {
                return Err(Error::StaleCache(
                    "cache kind does not match layer kind".into(),
                ))
            }
        })
    }

    /// Parameter tensors in a fixed order: dense `[W, b?]`, low-rank `[U, V]`,
    /// pruned `[values]`, Clos `[stage-1 blocks.., stage-2 blocks.., stage-3 blocks..]`.
    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Dense(l) => l.params(),
            Layer::LowRank(l) => l.params(),
            Layer::Pruned(l) => l.params(),
            Layer::Clos(l) => l.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Dense(l) => l.params_mut(),
            Layer::LowRank(l) => l.params_mut(),
            Layer::Pruned(l) => l.params_mut(),
            Layer::Clos(l) => l.params_mut(),
        }
    }

    /// A human-readable name for each tensor of [`Layer::params`].
    pub fn param_labels(&self) -> Vec<String> {
        match self {
            Layer::Dense(l) => {
                let mut v = vec!["weight".to_string()];
                if l.bias().is_some() {
                    v.push("bias".into());
                }
                v
            }
            Layer::LowRank(_) => vec!["u".into(), "v".into()],
            Layer::Pruned(_) => vec!["values".into()],
            Layer::Clos(l) => l
                .stages()
                .iter()
                .enumerate()
                .flat_map(|(s, st)| {
                    (0..st.blocks().len()).map(move |b| format!("stage{}.block{}", s + 1, b))
                })
                .collect(),
        }
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params()
            .iter()
            .map(|p| vec![T::ZERO; p.len()])
            .collect()
    }

    pub fn param_count(&self) -> ParamCount {
        match self {
            Layer::Dense(l) => ParamCount {
                weights: l.inputs() * l.outputs(),
                biases: l.bias().map_or(0, <[T]>::len),
                index_overhead: 0,
            },
            Layer::LowRank(l) => ParamCount {
                weights: l.rank() * (l.inputs() + l.outputs()),
                biases: 0,
                index_overhead: 0,
            },
            Layer::Pruned(l) => ParamCount {
                weights: l.mask().nnz(),
                biases: 0,
                index_overhead: l.mask().nnz(),
            },
            Layer::Clos(l) => ParamCount {
                weights: l.weight_count(),
                biases: 0,
                index_overhead: 0,
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Layer::Dense(l) => format!("dense {}x{}", l.inputs(), l.outputs()),
            Layer::LowRank(l) => format!("lowrank {}x{} r={}", l.inputs(), l.outputs(), l.rank()),
            Layer::Pruned(l) => format!("pruned {}x{} d={}", l.inputs(), l.outputs(), l.density()),
            Layer::Clos(l) => format!("clos {} act={}", l.spec().spec(), l.activation()),
        }
    }
}

/// `(trainable scalars, stored connection indices)` for a layer.
pub fn layer_param_count<T: Scalar>(layer: &Layer<T>) -> (usize, usize) {
    let c = layer.param_count();
    (c.trainable(), c.index_overhead)
}

pub fn build_clos_layer<T: Scalar>(
    spec: &ValidatedClosSpec,
    init_rule: InitRule,
    seed: u64,
    activation: Activation,
) -> ClosLayer<T> {
    ClosLayer::new(spec, init_rule, seed, activation)
}

pub fn build_pruned_layer<T: Scalar>(
    inputs: usize,
    outputs: usize,
    density: f64,
    seed: u64,
) -> Result<PrunedLayer<T>> {
    PrunedLayer::new(inputs, outputs, density, seed)
}

impl<T> From<DenseLayer<T>> for Layer<T> {
    fn from(l: DenseLayer<T>) -> Self {
        Layer::Dense(l)
    }
}

impl<T> From<LowRankLayer<T>> for Layer<T> {
    fn from(l: LowRankLayer<T>) -> Self {
        Layer::LowRank(l)
    }
}

impl<T> From<PrunedLayer<T>> for Layer<T> {
    fn from(l: PrunedLayer<T>) -> Self {
        Layer::Pruned(l)
    }
}

impl<T> From<ClosLayer<T>> for Layer<T> {
    fn from(l: ClosLayer<T>) -> Self {
        Layer::Clos(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{ClosSpec, Stage};

    fn spec(i: usize, o: usize, ri: usize, rm: usize, ro: usize) -> ValidatedClosSpec {
        ClosSpec::new(i, o, ri, rm, ro).validate().unwrap()
    }

    #[test]
    fn clos_fig_4_config_has_24_weights_in_6_blocks() {
        let l: ClosLayer<f64> = build_clos_layer(
            &spec(4, 4, 2, 2, 2),
            InitRule::BlockGlorot,
            42,
            Activation::None,
        );
        assert_eq!(l.weight_count(), 24);
        let blocks: usize = l.stages().iter().map(|s| s.blocks().len()).sum();
        assert_eq!(blocks, 6);
    }

    #[test]
    fn minimal_clos_layer() {
        let l: ClosLayer<f64> = build_clos_layer(
            &spec(1, 1, 1, 1, 1),
            InitRule::BlockGlorot,
            0,
            Activation::None,
        );
        assert_eq!(l.weight_count(), 3);
        for s in l.stages() {
            assert_eq!(s.blocks().len(), 1);
            assert_eq!((s.block(0).rows(), s.block(0).cols()), (1, 1));
        }
    }

    #[test]
    fn clos_init_is_deterministic_and_bounded() {
        let s = spec(16, 16, 4, 2, 4);
        let a: ClosLayer<f64> = build_clos_layer(&s, InitRule::BlockGlorot, 9, Activation::Relu);
        let b: ClosLayer<f64> = build_clos_layer(&s, InitRule::BlockGlorot, 9, Activation::Relu);
        assert_eq!(a, b);
        let c: ClosLayer<f64> = build_clos_layer(&s, InitRule::BlockGlorot, 10, Activation::Relu);
        assert_ne!(a, c);
        for (st, shape) in a.stages().iter().zip(s.stages()) {
            for (blk, &(r, cols)) in st.blocks().iter().zip(&shape.blocks) {
                let lim = (6.0 / (r + cols) as f64).sqrt();
                assert!(blk.as_slice().iter().all(|v| v.abs() <= lim));
            }
        }
    }

    #[test]
    fn all_ones_clos_sends_rm_to_every_output() {
        let l: ClosLayer<f64> = build_clos_layer(
            &spec(4, 4, 2, 2, 2),
            InitRule::Constant(1.0),
            0,
            Activation::None,
        );
        let x = Matrix::from_vec(1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().as_slice(), &[2.0, 2.0, 2.0, 2.0]);
        let e = l.effective_matrix().unwrap();
        assert!(e.as_slice().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn effective_matrix_rejected_with_activation() {
        let l: ClosLayer<f64> = build_clos_layer(
            &spec(4, 4, 2, 2, 2),
            InitRule::BlockGlorot,
            0,
            Activation::Relu,
        );
        assert!(matches!(
            l.effective_matrix(),
            Err(Error::ActivationNotNone)
        ));
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let d = DenseLayer::from_weights(Matrix::<f64>::identity(3), None).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.5, -2.0, 0.25, 0.0, 7.0, -1.0]).unwrap();
        let y = Layer::Dense(d).forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let l = Layer::Dense(DenseLayer::<f64>::new(3, 2, true, 0));
        assert!(l.forward(&Matrix::zeros(1, 4)).is_err());
        let c = Layer::Clos(build_clos_layer::<f64>(
            &spec(4, 4, 2, 2, 2),
            InitRule::BlockGlorot,
            0,
            Activation::None,
        ));
        assert!(c.forward(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn param_counts() {
        let c = Layer::Clos(build_clos_layer::<f32>(
            &spec(16, 16, 4, 2, 4),
            InitRule::BlockGlorot,
            0,
            Activation::Relu,
        ));
        assert_eq!(layer_param_count(&c), (96, 0));
        let d = Layer::Dense(DenseLayer::<f32>::new(784, 256, false, 0));
        assert_eq!(layer_param_count(&d), (200704, 0));
        let db = Layer::Dense(DenseLayer::<f32>::new(784, 256, true, 0));
        assert_eq!(db.param_count().biases, 256);
        let lr = Layer::LowRank(LowRankLayer::<f32>::new(784, 256, 16, 0));
        assert_eq!(layer_param_count(&lr), (16 * (784 + 256), 0));
    }

    #[test]
    fn pruned_param_count_reports_index_overhead() {
        let p = build_pruned_layer::<f64>(100, 100, 0.1, 3).unwrap();
        let nnz = p.mask().to_dense().iter().filter(|&&b| b).count();
        assert_eq!(layer_param_count(&Layer::Pruned(p)), (nnz, nnz));
    }

    #[test]
    fn pruned_density_one_is_fully_connected() {
        let p = build_pruned_layer::<f64>(7, 5, 1.0, 1).unwrap();
        assert!(p.mask().to_dense().iter().all(|&b| b));
        assert_eq!(p.mask().nnz(), 35);
    }

    #[test]
    fn pruned_mask_statistics_and_coverage() {
        let p = build_pruned_layer::<f64>(100, 100, 0.1, 3).unwrap();
        let nnz = p.mask().nnz() as f64;
        let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
        assert!((nnz - 1000.0).abs() <= 4.0 * sigma, "nnz {nnz}");
        assert!(p.mask().has_full_coverage());
        let q = build_pruned_layer::<f64>(100, 100, 0.1, 3).unwrap();
        assert_eq!(p.mask(), q.mask());
    }

    #[test]
    fn pruned_rejects_bad_density() {
        assert!(matches!(
            build_pruned_layer::<f64>(4, 4, 0.0, 0),
            Err(Error::InvalidDensity(_))
        ));
        assert!(build_pruned_layer::<f64>(4, 4, 1.5, 0).is_err());
        assert!(build_pruned_layer::<f64>(4, 4, f64::NAN, 0).is_err());
    }

    #[test]
    fn sparse_masks_are_repaired_to_full_coverage() {
        // density this low almost surely leaves empty rows in every draw
        let p = build_pruned_layer::<f64>(50, 40, 0.001, 5).unwrap();
        assert!(p.mask().has_full_coverage());
    }

    #[test]
    fn stage_offsets_tile_widths() {
        let l: ClosLayer<f64> = build_clos_layer(
            &spec(11, 7, 3, 4, 2),
            InitRule::BlockGlorot,
            1,
            Activation::None,
        );
        for st in l.stages() {
            let mut next_in = 0;
            let mut next_out = 0;
            for b in 0..st.blocks().len() {
                assert_eq!(st.in_range(b).start, next_in);
                assert_eq!(st.out_range(b).start, next_out);
                next_in = st.in_range(b).end;
                next_out = st.out_range(b).end;
            }
            assert_eq!(next_in, st.in_width());
            assert_eq!(next_out, st.out_width());
        }
        assert_eq!(l.stages()[0].shape().stage, Stage::Input);
        assert_eq!(l.stages()[1].in_width(), 12);
        assert_eq!(l.stages()[2].in_width(), 8);
    }
}
