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

//! Helpers shared by the integration test targets.

#![allow(dead_code)]
// The oracles index on purpose so they read like the sums they compute.
#![allow(clippy::needless_range_loop)]

use closnet::layers::{Activation, ClosLayer, InitRule};
use closnet::topology::ClosSpec;
use closnet::torus_sim::TorusConfig;
use closnet::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

/// Small integers: every product and partial sum is exact in f64.
pub fn integer_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut r = rng(seed);
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-4i32..=4) as f64)
}

pub fn clos_layer(spec: ClosSpec, seed: u64, act: Activation) -> ClosLayer<f64> {
    ClosLayer::new(&spec.validate().unwrap(), InitRule::BlockGlorot, seed, act)
}

pub fn integer_clos_layer(spec: ClosSpec, seed: u64) -> ClosLayer<f64> {
    let mut layer = clos_layer(spec, seed, Activation::None);
    let mut r = rng(seed ^ 0x5eed);
    for stage in layer.stages_mut() {
        for b in stage.blocks_mut() {
            for v in b.as_mut_slice() {
                *v = r.gen_range(-3i32..=3) as f64;
            }
        }
    }
    layer
}

/// Square-stage specs with their tori: 16 shapes, then four more with
/// non-unit costs.
pub fn torus_suite() -> Vec<(ClosSpec, TorusConfig, u64)> {
    let mut out = Vec::new();
    let mut seed = 100;
    for r in 1..=4 {
        for c in 1..=4 {
            let n = r * c;
            out.push((ClosSpec::new(n, n, r, c, r), TorusConfig::new(r, c), seed));
            seed += 1;
        }
    }
    out.push((
        ClosSpec::new(4, 4, 2, 2, 2),
        TorusConfig::new(2, 2).with_costs(3, 1),
        11,
    ));
    out.push((
        ClosSpec::new(6, 6, 2, 3, 2),
        TorusConfig::new(2, 3).with_costs(1, 4),
        12,
    ));
    out.push((
        ClosSpec::new(12, 12, 3, 4, 3),
        TorusConfig::new(3, 4).with_costs(2, 2),
        13,
    ));
    out.push((
        ClosSpec::new(16, 16, 4, 4, 4),
        TorusConfig::new(4, 4).with_costs(0, 1),
        14,
    ));
    out
}

/// MNIST directory when the four IDX files are present: the data-dir
/// environment variable first, then the workspace `data/mnist`.
pub fn mnist_dir() -> Option<std::path::PathBuf> {
    let candidates = [
        std::env::var_os(closnet::cli::DATA_DIR_ENV).map(std::path::PathBuf::from),
        Some(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|d| closnet::data::load_idx(d.join(closnet::data::MNIST_TEST_LABELS)).is_ok())
}

/// Balanced block sizes, larger blocks first.
pub fn sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|p| n / parts + usize::from(p < n % parts))
        .collect()
}

/// Router-by-router evaluation written directly from the topology, without
/// permutation arrays: input router `i` feeds middle router `m` through its
/// `m`-th output, and middle router `m` feeds output router `o` through its
/// `o`-th output.
pub fn oracle_forward(layer: &ClosLayer<f64>, x: &[f64]) -> Vec<f64> {
    let s = layer.spec().spec();
    let act = layer.activation();
    let [w1, w2, w3] = layer.stages();
    let (ri, rm, ro) = (s.input_routers, s.middle_routers, s.output_routers);
    let in_sizes = sizes(s.inputs, ri);
    let out_sizes = sizes(s.outputs, ro);
    let mut h1 = vec![vec![0.0; rm]; ri];
    let mut off = 0;
    for i in 0..ri {
        for m in 0..rm {
            let mut acc = 0.0;
            for j in 0..in_sizes[i] {
                acc += x[off + j] * w1.block(i).get(j, m);
            }
            h1[i][m] = act.apply(acc);
        }
        off += in_sizes[i];
    }
    let mut h2 = vec![vec![0.0; ro]; rm];
    for m in 0..rm {
        for o in 0..ro {
            let mut acc = 0.0;
            for i in 0..ri {
                acc += h1[i][m] * w2.block(m).get(i, o);
            }
            h2[m][o] = act.apply(acc);
        }
    }
    let mut y = Vec::with_capacity(s.outputs);
    for o in 0..ro {
        for k in 0..out_sizes[o] {
            let mut acc = 0.0;
            for m in 0..rm {
                acc += h2[m][o] * w3.block(o).get(m, k);
            }
            y.push(acc);
        }
    }
    y
}
