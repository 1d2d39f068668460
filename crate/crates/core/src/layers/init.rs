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

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub type LayerRng = ChaCha8Rng;

pub fn rng(seed: u64) -> LayerRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Half-width of the Glorot uniform range for the given fans.
pub fn glorot_limit(fan_in: f64, fan_out: f64) -> f64 {
    (6.0 / (fan_in + fan_out)).sqrt()
}

/// Fills `n` values uniform in `[-limit, limit]`. Samples are drawn in f64 so
/// f32 and f64 layers built from one seed agree up to rounding.
pub fn uniform_fill<T: Scalar>(rng: &mut LayerRng, n: usize, limit: f64) -> Vec<T> {
    let dist = Uniform::new_inclusive(-limit, limit);
    (0..n).map(|_| T::from_f64(dist.sample(rng))).collect()
}
