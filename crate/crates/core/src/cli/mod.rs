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

//! The `closnet` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 failed equivalence check in `simulate`.

pub mod config;
pub mod descriptor;
pub mod plot;
pub mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::data::{load_mnist, synthetic_teacher, Dataset, Split};
use crate::error::{Error, Result};
use crate::layers::{Activation, ClosLayer, InitRule, Layer, LayerCache, PrunedLayer};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::topology::ClosSpec;
use crate::torus_sim::{
    map_to_torus, predicted_cycles, simulate_backward, simulate_inference, TorusConfig,
};
use crate::train::{train, Precision, TrainConfig, TrainReport};

use config::KeyValues;
use descriptor::ModelDescriptor;
use sweep::{
    default_grid, median_by_model, parse_seeds, rows_to_csv, run_sweep, SweepGrid, DENSE_REFERENCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

/// Environment variable naming the default MNIST directory.
pub const DATA_DIR_ENV: &str = "CLOSNET_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

pub const TIMING_HEADER: [&str; 2] = ["batch_size", "epoch_seconds"];

/// Teacher for `--dataset synthetic`: same 784-wide inputs and 10 classes as MNIST.
pub fn synthetic_teacher_spec() -> ClosSpec {
    ClosSpec::new(784, 10, 28, 4, 5)
}

const SYNTHETIC_DATA_SEED: u64 = 7;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    Mnist(PathBuf),
    /// Clos-teacher data, handy when MNIST is not available.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataOptions {
    pub source: DataSource,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl DataOptions {
    pub fn mnist_default() -> Self {
        Self {
            source: DataSource::Mnist(default_data_dir()),
            train_limit: None,
            test_limit: None,
        }
    }

    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let (train_set, test_set) = match &self.source {
            DataSource::Mnist(dir) => {
                let (a, b) = load_mnist(dir)?;
                (
                    self.train_limit.map_or(a.clone(), |n| a.take(n)),
                    self.test_limit.map_or(b.clone(), |n| b.take(n)),
                )
            }
            DataSource::Synthetic => {
                let n_train = self.train_limit.unwrap_or(2000);
                let n_test = self.test_limit.unwrap_or(500);
                if n_train == 0 || n_test == 0 {
                    return Err(Error::EmptyDataset);
                }
                let all = synthetic_teacher(
                    synthetic_teacher_spec(),
                    n_train + n_test,
                    SYNTHETIC_DATA_SEED,
                    0.0,
                )?;
                let train_idx: Vec<usize> = (0..n_train).collect();
                let test_idx: Vec<usize> = (n_train..n_train + n_test).collect();
                let test = all.subset(&test_idx);
                let test = Dataset::new(
                    test.features().clone(),
                    test.labels().to_vec(),
                    test.classes(),
                    Split::Test,
                )?;
                (all.subset(&train_idx), test)
            }
        };
        if train_set.is_empty() || test_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok((train_set, test_set))
    }
}

/// `$CLOSNET_DATA_DIR`, else `data/mnist`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from)
}

/// Input width every data source produces.
const DATA_WIDTH: usize = 784;

#[derive(Parser, Debug)]
#[command(
    name = "closnet",
    version,
    about = "Clos-structured layers: parameter accounting, training, sweeps and torus simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print parameter count, path diversity and block shapes.
    Params(ParamsArgs),
    /// Train one model and write a report CSV and checkpoint.
    Train(TrainArgs),
    /// Train a grid of models over several seeds.
    Sweep(SweepArgs),
    /// Measure epoch wall-time for several batch sizes.
    Timing(TimingArgs),
    /// Run a Clos layer on the torus simulator and check it against the reference.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ParamsArgs {
    /// Clos spec I,O,Ri,Rm,Ro.
    #[arg(long)]
    clos: Option<ClosSpec>,
    /// Dense layer IN,OUT.
    #[arg(long)]
    dense: Option<String>,
    /// Low-rank layer IN,OUT,RANK.
    #[arg(long)]
    lowrank: Option<String>,
    /// Pruned layer IN,OUT,DENSITY[,SEED].
    #[arg(long)]
    pruned: Option<String>,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// MNIST directory [env: CLOSNET_DATA_DIR, default data/mnist].
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// `mnist` or `synthetic`.
    #[arg(long)]
    dataset: Option<String>,
    /// Use only the first N training samples.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use only the first N test samples.
    #[arg(long)]
    test_limit: Option<usize>,
}

impl DataArgs {
    /// Flags first, then `file`.
    fn resolve(&self, file: Option<&KeyValues>) -> Result<DataOptions> {
        let get = |k: &str| file.and_then(|f| f.get(k));
        let dataset = self
            .dataset
            .clone()
            .or_else(|| get("dataset").map(str::to_string));
        let source = match dataset.as_deref().map(str::trim) {
            None | Some("mnist") => DataSource::Mnist(
                self.data_dir
                    .clone()
                    .or_else(|| get("data_dir").map(PathBuf::from))
                    .unwrap_or_else(default_data_dir),
            ),
            Some("synthetic") => DataSource::Synthetic,
            Some(other) => return Err(Error::Config(format!("unknown dataset {other:?}"))),
        };
        let limit = |flag: Option<usize>, key: &str| -> Result<Option<usize>> {
            match flag {
                Some(v) => Ok(Some(v)),
                None => file.map_or(Ok(None), |f| f.parse_value(key)),
            }
        };
        Ok(DataOptions {
            source,
            train_limit: limit(self.train_limit, "train_limit")?,
            test_limit: limit(self.test_limit, "test_limit")?,
        })
    }
}

pub const TRAIN_KEYS: [&str; 14] = [
    "model",
    "epochs",
    "batch_size",
    "lr",
    "momentum",
    "seed",
    "precision",
    "data_dir",
    "dataset",
    "train_limit",
    "test_limit",
    "report",
    "checkpoint",
    "omit_timing",
];

#[derive(Args, Debug)]
struct TrainArgs {
    /// key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hidden layer, e.g. dense:256, lowrank:256,16, pruned:256,0.1, clos:256,8,36,8.
    #[arg(long)]
    model: Option<ModelDescriptor>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<Precision>,
    /// Report CSV path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write 0 in the epoch_seconds column so reports are byte-reproducible.
    #[arg(long)]
    omit_timing: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Grid file (model = ... lines plus epochs, seeds, batch_size, lr,
    /// momentum, precision). Without it the built-in grid runs.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG scatter of accuracy against parameters.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Worker threads; each point still trains single-threaded.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the grid's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the grid's seeds, e.g. 1,2,3.
    #[arg(long)]
    seeds: Option<String>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct TimingArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,32,128,512")]
    batch_sizes: Vec<usize>,
    /// Runs per batch size; the median is reported.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value = "dense:256")]
    model: ModelDescriptor,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = Precision::F32)]
    precision: Precision,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Square-stage Clos spec I,O,Ri,Rm,Ro.
    #[arg(long)]
    clos: ClosSpec,
    /// Torus dimensions RxC.
    #[arg(long)]
    torus: TorusConfig,
    /// Seeds weights, input and upstream gradient.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also simulate backpropagation.
    #[arg(long)]
    backward: bool,
    #[arg(long, default_value_t = Activation::Relu)]
    activation: Activation,
    #[arg(long, default_value_t = 1)]
    hop_cost: u64,
    #[arg(long, default_value_t = 1)]
    mac_cost: u64,
    /// `random`, `ones`, or `onehot:K`.
    #[arg(long, default_value = "random")]
    input: String,
    /// Use all-ones weights instead of seeded random ones.
    #[arg(long)]
    unit_weights: bool,
    /// Write the cycle report CSV here.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command, and returns
/// the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Params(a) => cmd_params(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Timing(a) => cmd_timing(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_USAGE
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn usize_list(s: &str, what: &str, n: usize) -> Result<Vec<String>> {
    let v: Vec<String> = s.split(',').map(|x| x.trim().to_string()).collect();
    if v.len() != n {
        return Err(Error::Config(format!(
            "{what} expects {n} comma-separated values, got {s:?}"
        )));
    }
    Ok(v)
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Config(format!("bad number {s:?}")))
}

/// Groups equal consecutive shapes: `4 x (4x2)`.
fn shape_summary(blocks: &[(usize, usize)]) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < blocks.len() {
        let j = blocks[i..].iter().take_while(|&&b| b == blocks[i]).count();
        parts.push(format!("{} x ({}x{})", j, blocks[i].0, blocks[i].1));
        i += j;
    }
    parts.join(", ")
}

fn cmd_params(a: &ParamsArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(spec) = a.clos {
        let v = spec.validate()?;
        writeln!(out, "clos {spec}").map_err(io)?;
        writeln!(out, "P={} D={}", v.param_count(), v.path_diversity()).map_err(io)?;
        for s in v.stages() {
            writeln!(
                out,
                "{:<7} {}",
                s.stage.to_string(),
                shape_summary(&s.blocks)
            )
            .map_err(io)?;
        }
    } else if let Some(d) = &a.dense {
        let f = usize_list(d, "--dense", 2)?;
        let (i, o): (usize, usize) = (parse_num(&f[0])?, parse_num(&f[1])?);
        if i == 0 || o == 0 {
            return Err(Error::Config("dense dimensions must be >= 1".into()));
        }
        writeln!(out, "dense {i}x{o}").map_err(io)?;
        writeln!(out, "P={} (+{o} bias)", i * o).map_err(io)?;
    } else if let Some(d) = &a.lowrank {
        let f = usize_list(d, "--lowrank", 3)?;
        let (i, o, r): (usize, usize, usize) =
            (parse_num(&f[0])?, parse_num(&f[1])?, parse_num(&f[2])?);
        if i == 0 || o == 0 || r == 0 {
            return Err(Error::Config("low-rank dimensions must be >= 1".into()));
        }
        writeln!(out, "lowrank {i}x{o} rank {r}").map_err(io)?;
        writeln!(out, "P={}", r * (i + o)).map_err(io)?;
    } else if let Some(d) = &a.pruned {
        let f: Vec<&str> = d.split(',').map(str::trim).collect();
        if !(3..=4).contains(&f.len()) {
            return Err(Error::Config(format!(
                "--pruned expects IN,OUT,DENSITY[,SEED], got {d:?}"
            )));
        }
        let (i, o): (usize, usize) = (parse_num(f[0])?, parse_num(f[1])?);
        let density: f64 = parse_num(f[2])?;
        let seed: u64 = f.get(3).map_or(Ok(1), |s| parse_num(s))?;
        if i == 0 || o == 0 {
            return Err(Error::Config("pruned dimensions must be >= 1".into()));
        }
        let layer: Layer<f32> = PrunedLayer::new(i, o, density, seed)?.into();
        let pc = layer.param_count();
        writeln!(out, "pruned {i}x{o} density {density} seed {seed}").map_err(io)?;
        writeln!(out, "P={} index_overhead={}", pc.weights, pc.index_overhead).map_err(io)?;
    }
    Ok(EXIT_OK)
}

/// Fully resolved `train` settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub model: ModelDescriptor,
    pub config: TrainConfig,
    pub data: DataOptions,
    pub report: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub omit_timing: bool,
}

fn resolve_train(a: &TrainArgs) -> Result<TrainPlan> {
    let file = a
        .config
        .as_deref()
        .map(|p| KeyValues::read(p, &TRAIN_KEYS))
        .transpose()?;
    let f = file.as_ref();
    let pick = |key: &str| -> Result<Option<String>> {
        Ok(f.and_then(|f| f.get(key)).map(str::to_string))
    };
    fn or_file<T: std::str::FromStr>(
        flag: Option<T>,
        f: Option<&KeyValues>,
        key: &str,
    ) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => f.map_or(Ok(None), |f| f.parse_value(key)),
        }
    }
    let model = match &a.model {
        Some(m) => *m,
        None => match pick("model")? {
            Some(s) => s.parse()?,
            None => DENSE_REFERENCE,
        },
    };
    let d = TrainConfig::default();
    let precision = match a.precision {
        Some(p) => p,
        None => pick("precision")?.map_or(Ok(d.precision), |s| s.parse())?,
    };
    let omit_timing = a.omit_timing
        || match pick("omit_timing")? {
            Some(v) => parse_bool(&v)?,
            None => false,
        };
    let config = TrainConfig {
        epochs: or_file(a.epochs, f, "epochs")?.unwrap_or(d.epochs),
        batch_size: or_file(a.batch_size, f, "batch_size")?.unwrap_or(d.batch_size),
        learning_rate: or_file(a.lr, f, "lr")?.unwrap_or(d.learning_rate),
        momentum: or_file(a.momentum, f, "momentum")?.unwrap_or(d.momentum),
        seed: or_file(a.seed, f, "seed")?.unwrap_or(d.seed),
        precision,
    };
    config.validate()?;
    model.validate(DATA_WIDTH)?;
    Ok(TrainPlan {
        model,
        config,
        data: a.data.resolve(f)?,
        report: a
            .report
            .clone()
            .or_else(|| f.and_then(|f| f.get("report")).map(PathBuf::from)),
        checkpoint: a
            .checkpoint
            .clone()
            .or_else(|| f.and_then(|f| f.get("checkpoint")).map(PathBuf::from)),
        omit_timing,
    })
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("bad boolean {other:?}"))),
    }
}

/// Builds, trains and serializes one model.
pub fn train_model<T: Scalar>(
    model: &ModelDescriptor,
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<(TrainReport, Vec<u8>)> {
    let mut m = model.build::<T>(train_set.width(), train_set.classes(), config.seed)?;
    let report = train(&mut m, train_set, test_set, config)?;
    Ok((report, checkpoint::encode(&m)))
}

pub fn run_train_plan(
    plan: &TrainPlan,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<(TrainReport, Vec<u8>)> {
    match plan.config.precision {
        Precision::F32 => train_model::<f32>(&plan.model, &plan.config, train_set, test_set),
        Precision::F64 => train_model::<f64>(&plan.model, &plan.config, train_set, test_set),
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let plan = resolve_train(a)?;
    let (train_set, test_set) = plan.data.load()?;
    let pc = plan
        .model
        .hidden_params(train_set.width(), plan.config.seed)?;
    writeln!(
        out,
        "model {} hidden weights {} index overhead {} ({} train / {} test samples, {})",
        plan.model,
        pc.weights,
        pc.index_overhead,
        train_set.len(),
        test_set.len(),
        plan.config.precision
    )
    .map_err(io)?;
    let (report, ckpt) = run_train_plan(&plan, &train_set, &test_set)?;
    for e in &report.epochs {
        writeln!(
            out,
            "epoch {:>3}  loss {:.6}  train_acc {:.4}  test_acc {:.4}",
            e.epoch, e.train_loss, e.train_acc, e.test_acc
        )
        .map_err(io)?;
    }
    if let Some(p) = &plan.report {
        report.write_csv(p, !plan.omit_timing)?;
    }
    if let Some(p) = &plan.checkpoint {
        std::fs::write(p, ckpt)?;
    }
    writeln!(out, "final test accuracy: {:.6}", report.final_test_acc()).map_err(io)?;
    Ok(EXIT_OK)
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let mut grid = match &a.grid {
        Some(p) => SweepGrid::read(p)?,
        None => default_grid(),
    };
    if let Some(e) = a.epochs {
        grid.train.epochs = e;
    }
    if let Some(s) = &a.seeds {
        grid.seeds = parse_seeds(s)?;
    }
    if a.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    grid.validate(DATA_WIDTH)?;
    let data = a.data.resolve(None)?;
    let (train_set, test_set) = data.load()?;
    let rows = run_sweep(&grid, &train_set, &test_set, a.jobs)?;
    let csv = rows_to_csv(&rows)?;
    if let Some(p) = &a.plot {
        let medians = median_by_model(&rows);
        let labels: Vec<String> = medians
            .iter()
            .map(|(m, _, _)| match m {
                ModelDescriptor::Clos {
                    activation: Activation::None,
                    ..
                } => "clos (linear)".to_string(),
                m => m.kind().to_string(),
            })
            .collect();
        let points: Vec<plot::Point<'_>> = medians
            .iter()
            .zip(&labels)
            .map(|((_, p, acc), l)| plot::Point {
                series: l,
                params: *p,
                accuracy: *acc,
            })
            .collect();
        std::fs::write(p, plot::scatter_svg(&points))?;
    }
    write_or_print(a.out.as_deref(), &csv, out)?;
    Ok(EXIT_OK)
}

/// Median epoch wall-time per batch size, training a fresh model each run.
pub fn epoch_timing(
    model: &ModelDescriptor,
    batch_sizes: &[usize],
    repeats: usize,
    seed: u64,
    precision: Precision,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<Vec<(usize, f64)>> {
    validate_timing(batch_sizes, repeats)?;
    // Repeats sweep the whole list in turn so slow drift in machine load
    // spreads evenly over every batch size.
    let mut times = vec![Vec::with_capacity(repeats); batch_sizes.len()];
    for _ in 0..repeats {
        for (slot, &b) in times.iter_mut().zip(batch_sizes) {
            let config = TrainConfig {
                epochs: 1,
                batch_size: b,
                seed,
                precision,
                ..TrainConfig::default()
            };
            let report = match precision {
                Precision::F32 => train_model::<f32>(model, &config, train_set, test_set)?.0,
                Precision::F64 => train_model::<f64>(model, &config, train_set, test_set)?.0,
            };
            slot.push(report.epochs[0].epoch_seconds);
        }
    }
    Ok(batch_sizes
        .iter()
        .zip(times.iter_mut())
        .map(|(&b, t)| (b, sweep::median(t)))
        .collect())
}

fn validate_timing(batch_sizes: &[usize], repeats: usize) -> Result<()> {
    if batch_sizes.is_empty() {
        return Err(Error::Config("no batch sizes given".into()));
    }
    if let Some(b) = batch_sizes.iter().find(|&&b| b == 0) {
        return Err(Error::Config(format!("batch size {b} must be >= 1")));
    }
    if repeats == 0 {
        return Err(Error::Config("--repeats must be >= 1".into()));
    }
    Ok(())
}

pub fn timing_csv(rows: &[(usize, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMING_HEADER)?;
    for (b, s) in rows {
        w.write_record([b.to_string(), format!("{s:.6}")])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("ascii csv"))
}

fn cmd_timing(a: &TimingArgs, out: &mut dyn Write) -> Result<i32> {
    validate_timing(&a.batch_sizes, a.repeats)?;
    a.model.validate(DATA_WIDTH)?;
    let (train_set, test_set) = a.data.resolve(None)?.load()?;
    let rows = epoch_timing(
        &a.model,
        &a.batch_sizes,
        a.repeats,
        a.seed,
        a.precision,
        &train_set,
        &test_set,
    )?;
    write_or_print(a.out.as_deref(), &timing_csv(&rows)?, out)?;
    Ok(EXIT_OK)
}

fn simulation_input(kind: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match kind.trim() {
        "random" => Ok((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        "ones" => Ok(vec![1.0; n]),
        other => {
            let k: usize = other
                .strip_prefix("onehot:")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::Config(format!("unknown input {other:?}")))?;
            if k >= n {
                return Err(Error::IndexOutOfRange {
                    context: "onehot input",
                    index: k,
                    len: n,
                });
            }
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            Ok(v)
        }
    }
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "match"
    } else {
        "mismatch"
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let torus = a.torus.with_costs(a.hop_cost, a.mac_cost);
    if a.mac_cost == 0 {
        return Err(Error::Config("--mac-cost must be >= 1".into()));
    }
    let mapping = map_to_torus(a.clos, torus)?;
    let init = if a.unit_weights {
        InitRule::Constant(1.0)
    } else {
        InitRule::BlockGlorot
    };
    let layer: ClosLayer<f64> = ClosLayer::new(mapping.spec(), init, a.seed, a.activation);
    let n = a.clos.inputs;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x51u64);
    let input = simulation_input(&a.input, n, &mut rng)?;

    let sim = simulate_inference(&mapping, &layer, &input)?;
    let x = Matrix::from_vec(1, n, input)?;
    let (reference, cache) = layer.forward_cached(&x)?;
    let forward_ok = bits_equal(&sim.output, reference.row(0));

    writeln!(
        out,
        "spec {} on {}x{} torus, activation {}, seed {}",
        a.clos, torus.rows, torus.cols, a.activation, a.seed
    )
    .map_err(io)?;
    let fmt_vec = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.6}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "output: {}", fmt_vec(&sim.output)).map_err(io)?;
    writeln!(out, "inference verdict: {}", verdict(forward_ok)).map_err(io)?;
    let mut all_ok = forward_ok && sim.report.total_cycles() == predicted_cycles(&mapping);
    let mut tables = vec![sim.report.clone()];

    if a.backward {
        let dy: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = simulate_backward(&mapping, &layer, Some(&sim.cache), &dy)?;
        let wrapped = Layer::Clos(layer.clone());
        let mut grads = wrapped.zero_grads();
        let dx = wrapped
            .backward(
                &LayerCache::Clos(cache),
                &Matrix::from_vec(1, n, dy)?,
                &mut grads,
                true,
            )?
            .expect("input gradient requested");
        let grads_ok = bits_equal(&back.input_grad, dx.row(0))
            && back.weight_grads.len() == grads.len()
            && back
                .weight_grads
                .iter()
                .zip(&grads)
                .all(|(a, b)| bits_equal(a, b));
        let h = back.report.direction_histogram();
        writeln!(out, "input gradient: {}", fmt_vec(&back.input_grad)).map_err(io)?;
        writeln!(out, "gradient verdict: {}", verdict(grads_ok)).map_err(io)?;
        writeln!(
            out,
            "backward directions N={} S={} E={} W={}",
            h[0], h[1], h[2], h[3]
        )
        .map_err(io)?;
        all_ok &= grads_ok && back.report.total_cycles() == predicted_cycles(&mapping);
        tables.push(back.report);
    }
    writeln!(
        out,
        "predicted cycles per pass: {}",
        predicted_cycles(&mapping)
    )
    .map_err(io)?;
    for t in &tables {
        writeln!(out, "{t}").map_err(io)?;
    }
    if let Some(p) = &a.report {
        let mut csv = tables[0].to_csv()?;
        for t in &tables[1..] {
            csv.extend(t.to_csv()?.lines().skip(1).flat_map(|l| [l, "\n"]));
        }
        std::fs::write(p, csv)?;
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_CHECK })
}
