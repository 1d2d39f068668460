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
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::train::{
    argmax_rows, backward_model, forward_model_owned, loss_softmax_xent, Model, Sgd,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!("unknown precision {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 1,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub epoch_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub param_count: usize,
}

pub const TRAIN_REPORT_HEADER: [&str; 5] = [
    "epoch",
    "train_loss",
    "train_acc",
    "test_acc",
    "epoch_seconds",
];

impl TrainReport {
    pub fn final_test_acc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test_acc)
    }

    /// True when everything except wall-clock times matches.
    pub fn same_results(&self, other: &TrainReport) -> bool {
        self.param_count == other.param_count
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.train_acc.to_bits() == b.train_acc.to_bits()
                    && a.test_acc.to_bits() == b.test_acc.to_bits()
            })
    }

    /// CSV with header `epoch,train_loss,train_acc,test_acc,epoch_seconds`.
    /// With `include_timing == false` the time column is written as 0 so the
    /// output is reproducible byte for byte.
    pub fn to_csv(&self, include_timing: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRAIN_REPORT_HEADER)?;
        for e in &self.epochs {
            let secs = if include_timing { e.epoch_seconds } else { 0.0 };
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.train_acc.to_string(),
                e.test_acc.to_string(),
                format!("{secs:.6}"),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ascii csv"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, include_timing: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(include_timing)?)?;
        Ok(())
    }
}

/// Per-epoch shuffle seed derived from the run seed (splitmix64 finalizer).
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    let mut z = seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn batch_matrix<T: Scalar>(ds: &Dataset, idx: &[usize]) -> Matrix<T> {
    let width = ds.width();
    let mut data = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        data.extend(ds.features().row(i).iter().map(|&v| T::from_f32(v)));
    }
    Matrix::from_vec(idx.len(), width, data).expect("sized")
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate<T: Scalar>(model: &Model<T>, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(1000) {
        let x = batch_matrix::<T>(ds, chunk);
        let pred = argmax_rows(&model.predict(&x)?);
        correct += chunk
            .iter()
            .zip(pred)
            .filter(|(&i, p)| ds.labels()[i] == *p)
            .count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Minibatch SGD with momentum over `train_set`, reporting test accuracy
/// after every epoch. Deterministic for a fixed seed and precision.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_set.width() != model.inputs() {
        return Err(Error::DimensionMismatch {
            context: "dataset width vs model input",
            expected: model.inputs(),
            found: train_set.width(),
        });
    }
    if train_set.classes() > model.classes() {
        return Err(Error::DimensionMismatch {
            context: "dataset classes vs model outputs",
            expected: train_set.classes(),
            found: model.classes(),
        });
    }
    let mut opt = Sgd::new(
        model,
        T::from_f64(config.learning_rate),
        T::from_f64(config.momentum),
    );
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for idx in batches(train_set, config.batch_size, epoch_seed(config.seed, epoch))? {
            let x = batch_matrix::<T>(train_set, &idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels()[i]).collect();
            let (logits, cache) = forward_model_owned(model, x)?;
            let (loss, dlogits) = loss_softmax_xent(&logits, &labels)?;
            loss_sum += loss * idx.len() as f64;
            correct += argmax_rows(&logits)
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();
            let grads = backward_model(model, &cache, &dlogits)?;
            opt.step(model, &grads)?;
        }
        let epoch_seconds = start.elapsed().as_secs_f64();
        let test_acc = evaluate(model, test_set)?;
        records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_acc,
            epoch_seconds,
        });
    }
    Ok(TrainReport {
        epochs: records,
        param_count: model.param_count().trainable(),
    })
}
