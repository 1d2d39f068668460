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

//! Dataset ingestion: IDX parsing, MNIST loading, batching, and synthetic
//! datasets for tests.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{build_clos_layer, Activation, InitRule};
use crate::matrix::Matrix;
use crate::topology::ClosSpec;
use crate::train::argmax_rows;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_UBYTE: u8 = 0x08;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// A parsed unsigned-byte IDX tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses a big-endian IDX buffer. Only the unsigned-byte element type is
/// supported.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    if bytes[2] != IDX_UBYTE {
        return Err(Error::UnsupportedElementType(bytes[2]));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::Truncated {
            expected: usize::MAX,
            found: bytes.len() - header,
        })?;
    if bytes.len() - header != payload {
        return Err(Error::Truncated {
            expected: payload,
            found: bytes.len() - header,
        });
    }
    Ok(IdxArray {
        magic,
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_idx(&bytes)
}

fn load_idx_expecting(path: &Path, magic: u32) -> Result<IdxArray> {
    let arr = load_idx(path)?;
    if arr.magic != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found: arr.magic,
        });
    }
    Ok(arr)
}

/// Serializes an unsigned-byte IDX tensor.
pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, dims.len() as u8]);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

pub fn write_idx(path: impl AsRef<Path>, dims: &[usize], data: &[u8]) -> Result<()> {
    fs::write(path, encode_idx(dims, data))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Labeled samples, one per row of `features`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix<f32>,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        features: Matrix<f32>,
        labels: Vec<usize>,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes,
            });
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            split: self.split,
        }
    }
}

fn resolve(dir: &Path, name: &str) -> PathBuf {
    let direct = dir.join(name);
    if direct.exists() {
        return direct;
    }
    // some mirrors ship "train-images.idx3-ubyte"
    let dotted = dir.join(name.replacen("-idx", ".idx", 1));
    if dotted.exists() {
        dotted
    } else {
        direct
    }
}

fn load_split(dir: &Path, images: &str, labels: &str, split: Split) -> Result<Dataset> {
    let img = load_idx_expecting(&resolve(dir, images), IDX_IMAGES_MAGIC)?;
    let lab = load_idx_expecting(&resolve(dir, labels), IDX_LABELS_MAGIC)?;
    if img.dims.len() != 3 {
        return Err(Error::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: img.magic,
        });
    }
    let (n, h, w) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: lab.dims[0],
        });
    }
    let features = Matrix::from_vec(
        n,
        h * w,
        img.data.iter().map(|&b| f32::from(b) / 255.0).collect(),
    )?;
    let labels = lab.data.iter().map(|&b| b as usize).collect();
    Dataset::new(features, labels, 10, split)
}

/// Loads the four standard MNIST IDX files from `dir`, scaling pixels into
/// `[0, 1]` and flattening each image row-major.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_split(dir, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS, Split::Train)?;
    let test = load_split(dir, MNIST_TEST_IMAGES, MNIST_TEST_LABELS, Split::Test)?;
    Ok((train, test))
}

/// Shuffled index batches covering `0..n` exactly once; the last batch may
/// be short.
pub fn batch_indices(n: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn batches(dataset: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    batch_indices(dataset.len(), batch_size, epoch_seed)
}

/// Inputs uniform in `[0, 1]`, labelled by the argmax of a frozen random
/// activation-free Clos layer of the given spec. With probability `noise` a
/// label is replaced by a uniformly random class.
pub fn synthetic_teacher(spec: ClosSpec, n: usize, seed: u64, noise: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let vspec = spec.validate()?;
    let teacher = build_clos_layer::<f64>(&vspec, InitRule::BlockGlorot, seed, Activation::None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    let x = Matrix::from_fn(n, spec.inputs, |_, _| rng.gen::<f32>());
    let logits = teacher.forward(&x.map(f64::from))?;
    let mut labels = argmax_rows(&logits);
    if noise > 0.0 {
        for l in labels.iter_mut() {
            if rng.gen_bool(noise.min(1.0)) {
                *l = rng.gen_range(0..spec.outputs);
            }
        }
    }
    Dataset::new(x, labels, spec.outputs, Split::Train)
}

/// Two-class data in `[0, 1]^width` split by a random hyperplane through the
/// cube's center, keeping only points at least `margin` from it.
pub fn synthetic_separable(n: usize, width: usize, margin: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut data = Vec::with_capacity(n * width);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let x: Vec<f32> = (0..width).map(|_| rng.gen::<f32>()).collect();
        let d = x
            .iter()
            .zip(&normal)
            .map(|(&xi, &w)| (f64::from(xi) - 0.5) * w)
            .sum::<f64>()
            / norm;
        if d.abs() < margin {
            continue;
        }
        data.extend_from_slice(&x);
        labels.push(usize::from(d > 0.0));
    }
    Dataset::new(Matrix::from_vec(n, width, data)?, labels, 2, Split::Train)
}
