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

use std::path::Path;
use std::process::Command;

use closnet::checkpoint;
use closnet::cli::{self, EXIT_CHECK, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use closnet::train::Model;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(
        std::iter::once("closnet").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic-data flags shared by the training commands.
const SYNTH: [&str; 6] = [
    "--dataset",
    "synthetic",
    "--train-limit",
    "200",
    "--test-limit",
    "50",
];

#[test]
fn params_prints_counts_and_shapes() {
    let r = run(&["params", "--clos", "16,16,4,2,4"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("P=96 D=2"), "{}", r.out);
    assert!(r.out.contains("input   4 x (4x2)"));
    assert!(r.out.contains("middle  2 x (4x4)"));
    assert!(r.out.contains("output  4 x (2x4)"));

    assert!(run(&["params", "--clos", "4,4,2,2,2"])
        .out
        .contains("P=24 D=2"));
    assert!(run(&["params", "--clos", "1,1,1,1,1"])
        .out
        .contains("P=3 D=1"));
    assert!(run(&["params", "--clos", "784,256,16,8,16"])
        .out
        .contains("P=10368 D=8"));
    assert!(run(&["params", "--dense", "784,256"])
        .out
        .contains("P=200704 (+256 bias)"));
    assert!(run(&["params", "--lowrank", "784,256,16"])
        .out
        .contains("P=16640"));

    for bad in [
        &["params", "--clos", "16,16,4,0,4"][..],
        &["params", "--clos", "3,16,4,2,4"],
        &["params"],
    ] {
        let r = run(bad);
        assert_eq!(r.code, EXIT_USAGE, "{bad:?}");
        assert!(!r.err.is_empty());
        assert!(r.out.is_empty());
    }
}

#[test]
fn help_goes_to_stdout() {
    let r = run(&["--help"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("simulate"));
    assert_eq!(run(&["frobnicate"]).code, EXIT_USAGE);
}

#[test]
fn train_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let go = |tag: &str| {
        let report = dir.path().join(format!("{tag}.csv"));
        let ckpt = dir.path().join(format!("{tag}.ckpt"));
        let mut args = vec![
            "train",
            "--model",
            "clos:256,16,8,16",
            "--epochs",
            "2",
            "--omit-timing",
        ];
        args.extend(SYNTH);
        args.extend([
            "--report",
            path_str(&report),
            "--checkpoint",
            path_str(&ckpt),
        ]);
        let r = run(&args);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        assert!(r.out.contains("final test accuracy: "));
        (std::fs::read(report).unwrap(), std::fs::read(ckpt).unwrap())
    };
    let (ra, ca) = go("a");
    let (rb, cb) = go("b");
    assert_eq!(ra, rb);
    assert_eq!(ca, cb);
    let text = String::from_utf8(ra).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("epoch,train_loss,train_acc,test_acc,epoch_seconds")
    );
    assert_eq!(lines.clone().count(), 2);
    assert!(lines.all(|l| l.ends_with(",0.000000")));

    let model: Model<f32> = checkpoint::decode(&ca).unwrap();
    let hidden = model.layers()[0].param_count().trainable();
    assert_eq!(hidden, 10368);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let report = dir.path().join("r.csv");
    std::fs::write(
        &cfg,
        format!(
            "# small run\nmodel = dense:16\nepochs = 3\ndataset = synthetic\ntrain-limit = 100\ntest_limit = 20\nomit_timing = true\nreport = {}\n",
            report.display()
        ),
    )
    .unwrap();
    let r = run(&["train", "--config", path_str(&cfg), "--epochs", "1"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 2);

    std::fs::write(&cfg, "model = dense:16\nlearning_rate = 0.1\n").unwrap();
    let r = run(&["train", "--config", path_str(&cfg)]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("learning_rate"), "{}", r.err);
}

#[test]
fn train_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "train",
        "--model",
        "dense:16",
        "--data-dir",
        path_str(&dir.path().join("nope")),
    ]);
    assert_eq!(r.code, EXIT_DATA, "{}", r.err);
    let r = run(&[
        "train",
        "--model",
        "clos:256,16,8,300",
        "--dataset",
        "synthetic",
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    let r = run(&[
        "train",
        "--model",
        "dense:16",
        "--batch-size",
        "0",
        "--dataset",
        "synthetic",
    ]);
    assert_eq!(r.code, EXIT_USAGE);
}

fn write_grid(dir: &Path, models: &[&str]) -> std::path::PathBuf {
    let p = dir.join("grid.cfg");
    let mut text = String::from("epochs = 1\nseeds = 1,2\nbatch_size = 32\n");
    for m in models {
        text.push_str(&format!("model = {m}\n"));
    }
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn sweep_validates_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let grid = write_grid(dir.path(), &["dense:32", "clos:256,16,8,300"]);
    let mut args = vec!["sweep", "--grid", path_str(&grid), "--out", path_str(&out)];
    args.extend(SYNTH);
    let r = run(&args);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(!out.exists());

    let empty = dir.path().join("empty.cfg");
    std::fs::write(&empty, "epochs = 1\n").unwrap();
    let mut args = vec!["sweep", "--grid", path_str(&empty), "--out", path_str(&out)];
    args.extend(SYNTH);
    assert_eq!(run(&args).code, EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn sweep_output_is_sorted_and_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(
        dir.path(),
        &[
            "clos:64,16,4,8",
            "pruned:64,0.2",
            "lowrank:64,4",
            "dense:64",
        ],
    );
    let sweep = |jobs: &str, name: &str| {
        let out = dir.path().join(name);
        let plot = dir.path().join(format!("{name}.svg"));
        let mut args = vec![
            "sweep",
            "--grid",
            path_str(&grid),
            "--out",
            path_str(&out),
            "--jobs",
            jobs,
        ];
        args.extend(["--plot", path_str(&plot)]);
        args.extend(SYNTH);
        let r = run(&args);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        assert!(std::fs::read_to_string(plot).unwrap().starts_with("<svg"));
        std::fs::read_to_string(out).unwrap()
    };
    let one = sweep("1", "a.csv");
    assert_eq!(one, sweep("2", "b.csv"));
    assert!(one.starts_with("kind,config,params,index_overhead,test_acc,seed\n"));
    let rows: Vec<Vec<String>> = csv::Reader::from_reader(one.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    // four models plus the dense reference, two seeds each
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().any(|r| r[0] == "dense" && r[1] == "256"));
    let keys: Vec<(&str, usize)> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[2].parse().unwrap()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn timing_emits_one_row_per_batch_size() {
    let mut args = vec![
        "timing",
        "--batch-sizes",
        "16",
        "--repeats",
        "1",
        "--model",
        "dense:16",
    ];
    args.extend(SYNTH);
    let r = run(&args);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[0], "batch_size,epoch_seconds");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("16,"));

    let mut args = vec!["timing", "--batch-sizes", "8,0"];
    args.extend(SYNTH);
    assert_eq!(run(&args).code, EXIT_USAGE);
}

#[test]
fn simulate_reports_verdicts_and_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cycles.csv");
    let r = run(&[
        "simulate",
        "--clos",
        "4,4,2,2,2",
        "--torus",
        "2x2",
        "--backward",
        "--report",
        path_str(&csv),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("inference verdict: match"));
    assert!(r.out.contains("gradient verdict: match"));
    assert!(r.out.contains("backward directions N=4 S=0 E=0 W=8"));
    assert!(r.out.contains("predicted cycles per pass: 6"));
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("phase,cycles,hops,macs,n,s,e,w\n"));
    assert!(text.contains("forward.1.row,2,4,8,0,0,4,0\n"));

    let r = run(&["simulate", "--clos", "16,16,4,2,4", "--torus", "2x2"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("conform"), "{}", r.err);
    assert_ne!(EXIT_CHECK, EXIT_USAGE);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_closnet");
    let ok = Command::new(bin)
        .args(["params", "--clos", "16,16,4,2,4"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("P=96 D=2"));
    let bad = Command::new(bin)
        .args(["params", "--clos", "16,16,4,2"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(!bad.stderr.is_empty());
    let missing = Command::new(bin)
        .args(["train", "--model", "dense:8"])
        .env(cli::DATA_DIR_ENV, "/nonexistent/closnet-data")
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_DATA));
}
