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

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{Activation, Layer, LayerCache};
use crate::matrix::Matrix;
use crate::train::{backward_model, forward_model, loss_softmax_xent, ForwardCache, Model};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Lower bound on the number of weights compared, spread over every
    /// parameter tensor (every Clos block included).
    pub min_samples: usize,
    pub seed: u64,
    /// Required distance of every ReLU pre-activation from zero. Inputs are
    /// re-jittered until the batch satisfies it.
    pub kink_margin: f64,
    pub max_jitter_attempts: usize,
    pub jitter_scale: f64,
    /// Floor on the relative-error denominator so that near-zero gradients
    /// compare on an absolute scale.
    pub denominator_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            min_samples: 200,
            seed: 0,
            kink_margin: 1e-4,
            max_jitter_attempts: 50,
            jitter_scale: 1e-2,
            denominator_floor: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(tensor label, weights checked, max relative error)`.
    pub per_tensor: Vec<(String, usize, f64)>,
    pub jitter_attempts: usize,
    pub min_kink_distance: f64,
}

fn min_kink_distance(model: &Model<f64>, cache: &ForwardCache<f64>) -> f64 {
    let mut min = f64::INFINITY;
    let mut visit = |m: &Matrix<f64>| {
        for &v in m.as_slice() {
            min = min.min(v.abs());
        }
    };
    for pre in &cache.pre_activations {
        visit(pre);
    }
    for (layer, c) in model.layers().iter().zip(&cache.layers) {
        if let (Layer::Clos(l), LayerCache::Clos(cc)) = (layer, c) {
            if l.activation() == Activation::Relu {
                visit(&cc.pre1);
                visit(&cc.pre2);
            }
        }
    }
    min
}

fn loss_at(model: &Model<f64>, x: &Matrix<f64>, labels: &[usize]) -> Result<f64> {
    let (logits, _) = forward_model(model, x)?;
    Ok(loss_softmax_xent(&logits, labels)?.0)
}

/// Compares analytic gradients with central differences on a random subset
/// of weights and returns the largest relative error.
/// Weights to check per tensor: at least one from every tensor, then spread
/// round-robin until `min_samples` (or every weight) is covered.
fn sample_quotas(lens: &[usize], min_samples: usize) -> Vec<usize> {
    let mut q: Vec<usize> = lens.iter().map(|&l| l.min(1)).collect();
    let budget = min_samples.min(lens.iter().sum());
    let mut assigned: usize = q.iter().sum();
    while assigned < budget {
        for (qi, &l) in q.iter_mut().zip(lens) {
            if *qi < l && assigned < budget {
                *qi += 1;
                assigned += 1;
            }
        }
    }
    q
}

pub fn grad_check(
    model: &Model<f64>,
    batch: &Matrix<f64>,
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if batch.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut x = batch.clone();
    let mut attempts = 0;
    let (logits, cache) = loop {
        let (logits, cache) = forward_model(model, &x)?;
        if min_kink_distance(model, &cache) >= opts.kink_margin
            || attempts >= opts.max_jitter_attempts
        {
            break (logits, cache);
        }
        attempts += 1;
        x = Matrix::from_fn(batch.rows(), batch.cols(), |r, c| {
            batch.get(r, c) + opts.jitter_scale * rng.gen_range(-1.0..1.0)
        });
    };
    let kink = min_kink_distance(model, &cache);
    let (_, dlogits) = loss_softmax_xent(&logits, labels)?;
    let grads = backward_model(model, &cache, &dlogits)?;

    let labels_per_tensor: Vec<String> = model
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            layer
                .param_labels()
                .into_iter()
                .map(move |s| format!("layer{l}.{s}"))
        })
        .collect();
    let flat_grads = grads.flat();
    let n_tensors = flat_grads.len();
    let quotas = sample_quotas(
        &flat_grads.iter().map(|g| g.len()).collect::<Vec<_>>(),
        opts.min_samples,
    );

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        per_tensor: Vec::with_capacity(n_tensors),
        jitter_attempts: attempts,
        min_kink_distance: kink,
    };
    for (t, analytic) in flat_grads.iter().enumerate() {
        let take = quotas[t];
        let picks = index::sample(&mut rng, analytic.len(), take).into_vec();
        let mut tensor_max = 0.0f64;
        for &k in &picks {
            let orig = probe.params()[t][k];
            probe.params_mut()[t][k] = orig + opts.epsilon;
            let plus = loss_at(&probe, &x, labels)?;
            probe.params_mut()[t][k] = orig - opts.epsilon;
            let minus = loss_at(&probe, &x, labels)?;
            probe.params_mut()[t][k] = orig;

            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let a = analytic[k];
            let denom = a.abs().max(numeric.abs()).max(opts.denominator_floor);
            tensor_max = tensor_max.max((a - numeric).abs() / denom);
        }
        report.checked += take;
        report.max_rel_error = report.max_rel_error.max(tensor_max);
        report
            .per_tensor
            .push((labels_per_tensor[t].clone(), take, tensor_max));
    }
    Ok(report)
}
