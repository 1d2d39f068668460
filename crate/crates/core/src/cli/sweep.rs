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

//! Accuracy-versus-parameters sweeps.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::KeyValues;
use super::descriptor::ModelDescriptor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::train::{train, Precision, TrainConfig};

pub const SWEEP_HEADER: [&str; 6] = [
    "kind",
    "config",
    "params",
    "index_overhead",
    "test_acc",
    "seed",
];

/// The dense model every sweep is compared against.
pub const DENSE_REFERENCE: ModelDescriptor = ModelDescriptor::Dense { hidden: 256 };

pub const GRID_KEYS: [&str; 7] = [
    "model",
    "epochs",
    "seeds",
    "batch_size",
    "lr",
    "momentum",
    "precision",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub models: Vec<ModelDescriptor>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

/// Our reconstruction of a parameter sweep around a 784-256-10 network:
/// dense widths, low ranks and pruning densities of the 256-wide hidden
/// layer, and Clos hidden layers from about 3k to 40k weights.
pub fn default_grid() -> SweepGrid {
    let mut models: Vec<ModelDescriptor> = [64, 128, 256]
        .into_iter()
        .map(|hidden| ModelDescriptor::Dense { hidden })
        .collect();
    models.extend([4, 8, 16, 32].map(|rank| ModelDescriptor::LowRank { hidden: 256, rank }));
    models.extend([0.05, 0.1, 0.2].map(|density| ModelDescriptor::Pruned {
        hidden: 256,
        density,
    }));
    for s in [
        "clos:256,28,2,16",
        "clos:256,28,4,16",
        "clos:256,16,8,16",
        "clos:256,16,16,16",
        "clos:256,28,24,16",
        "clos:256,8,36,8",
        "clos:256,8,36,8,none",
    ] {
        models.push(s.parse().expect("static descriptor"));
    }
    SweepGrid {
        models,
        seeds: vec![1, 2, 3],
        train: TrainConfig::default(),
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad seed {v:?}")))
        })
        .collect()
}

impl SweepGrid {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut grid = SweepGrid {
            models: kv.all("model").map(str::parse).collect::<Result<_>>()?,
            seeds: vec![1, 2, 3],
            train: TrainConfig::default(),
        };
        if let Some(s) = kv.get("seeds") {
            grid.seeds = parse_seeds(s)?;
        }
        let t = &mut grid.train;
        t.epochs = kv.parse_value("epochs")?.unwrap_or(t.epochs);
        t.batch_size = kv.parse_value("batch_size")?.unwrap_or(t.batch_size);
        t.learning_rate = kv.parse_value("lr")?.unwrap_or(t.learning_rate);
        t.momentum = kv.parse_value("momentum")?.unwrap_or(t.momentum);
        if let Some(p) = kv.get("precision") {
            t.precision = p.parse()?;
        }
        Ok(grid)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::read(path, &GRID_KEYS)?)
    }

    /// Validates everything up front and adds the dense reference if absent.
    pub fn validate(&mut self, inputs: usize) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("sweep grid has no models".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("sweep grid has no seeds".into()));
        }
        self.train.validate()?;
        for m in &self.models {
            m.validate(inputs)?;
        }
        if !self.models.contains(&DENSE_REFERENCE) {
            self.models.push(DENSE_REFERENCE);
        }
        let mut kinds: Vec<&str> = self.models.iter().map(ModelDescriptor::kind).collect();
        kinds.sort_unstable();
        kinds.dedup();
        if kinds.len() < 2 {
            return Err(Error::Config(
                "a comparison sweep needs at least two layer kinds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub model: ModelDescriptor,
    /// Weights of the hidden layer, biases excluded.
    pub params: usize,
    pub index_overhead: usize,
    pub test_acc: f64,
    pub seed: u64,
}

fn run_point(
    model: &ModelDescriptor,
    seed: u64,
    base: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<SweepRow> {
    let config = TrainConfig {
        seed,
        ..base.clone()
    };
    let (inputs, classes) = (train_set.width(), train_set.classes());
    let pc = model.hidden_params(inputs, seed)?;
    let report = match config.precision {
        Precision::F32 => train(
            &mut model.build::<f32>(inputs, classes, seed)?,
            train_set,
            test_set,
            &config,
        )?,
        Precision::F64 => train(
            &mut model.build::<f64>(inputs, classes, seed)?,
            train_set,
            test_set,
            &config,
        )?,
    };
    Ok(SweepRow {
        model: *model,
        params: pc.weights,
        index_overhead: pc.index_overhead,
        test_acc: report.final_test_acc(),
        seed,
    })
}

/// Trains every (model, seed) point on `jobs` worker threads and returns the
/// rows sorted by kind, then parameter count, then config and seed. Each
/// point is single-threaded, so the result does not depend on `jobs`.
pub fn run_sweep(
    grid: &SweepGrid,
    train_set: &Dataset,
    test_set: &Dataset,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let mut grid = grid.clone();
    grid.validate(train_set.width())?;
    let points: Vec<(ModelDescriptor, u64)> = grid
        .models
        .iter()
        .flat_map(|m| grid.seeds.iter().map(move |&s| (*m, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRow>>>> =
        Mutex::new((0..points.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(points.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((m, s)) = points.get(i) else { break };
                let r = run_point(m, *s, &grid.train, train_set, test_set);
                results.lock().expect("poisoned")[i] = Some(r);
            });
        }
    });
    let mut rows = results
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|r| r.expect("every point ran"))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        (a.model.kind(), a.params, a.model.config(), a.seed).cmp(&(
            b.model.kind(),
            b.params,
            b.model.config(),
            b.seed,
        ))
    });
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.kind().to_string(),
            r.model.config(),
            r.params.to_string(),
            r.index_overhead.to_string(),
            format!("{:.6}", r.test_acc),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("ascii csv"))
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median test accuracy over seeds for each model, in row order.
pub fn median_by_model(rows: &[SweepRow]) -> Vec<(ModelDescriptor, usize, f64)> {
    let mut out: Vec<(ModelDescriptor, usize, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, _, _)| *m == r.model) {
            Some((_, _, accs)) => accs.push(r.test_acc),
            None => out.push((r.model, r.params, vec![r.test_acc])),
        }
    }
    out.into_iter()
        .map(|(m, p, mut accs)| (m, p, median(&mut accs)))
        .collect()
}
