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

//! Acceptance run: one PASS/FAIL line per criterion, each checked at its
//! stated tolerance and runtime budget. Pass criterion numbers as arguments
//! to run a subset, e.g. `cargo test --test acceptance -- 1 6`.

mod common;

use std::time::{Duration, Instant};

use closnet::cli::descriptor::ModelDescriptor;
use closnet::cli::sweep::{median, rows_to_csv, run_sweep, SweepGrid};
use closnet::cli::{self, epoch_timing, train_model};
use closnet::data::{load_mnist, synthetic_teacher};
use closnet::layers::{
    Activation, ClosLayer, DenseLayer, InitRule, Layer, LayerCache, LowRankLayer, PrunedLayer,
};
use closnet::topology::{enumerate_paths, param_count, path_diversity, validate_spec, ClosSpec};
use closnet::torus_sim::{
    map_to_torus, predicted_cycles, simulate_backward, simulate_inference, TorusConfig,
};
use closnet::train::{grad_check, GradCheckOptions, Model, Precision, TrainConfig};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria = [
        Criterion {
            id: 1,
            title: "parameter formula",
            budget: Duration::from_secs(1),
            run: criterion_1,
        },
        Criterion {
            id: 2,
            title: "path diversity",
            budget: Duration::from_secs(30),
            run: criterion_2,
        },
        Criterion {
            id: 3,
            title: "factorization equivalence",
            budget: Duration::from_secs(30),
            run: criterion_3,
        },
        Criterion {
            id: 4,
            title: "gradient correctness",
            budget: Duration::from_secs(120),
            run: criterion_4,
        },
        Criterion {
            id: 5,
            title: "desk-scale size claim",
            budget: Duration::from_secs(30 * 60),
            run: criterion_5,
        },
        Criterion {
            id: 6,
            title: "simulator equivalence",
            budget: Duration::from_secs(60),
            run: criterion_6,
        },
        Criterion {
            id: 7,
            title: "timing trend",
            budget: Duration::from_secs(10 * 60),
            run: criterion_7,
        },
        Criterion {
            id: 8,
            title: "determinism",
            budget: Duration::from_secs(5 * 60),
            run: criterion_8,
        },
    ];
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let over = took > c.budget;
        let (tag, detail) = match outcome {
            Pass(d) if over => ("FAIL", format!("{d}; over budget {:?}", c.budget)),
            Pass(d) => ("PASS", d),
            Fail(d) => ("FAIL", d),
            Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "{tag} criterion {} ({}): {detail} [{:.2} s]",
            c.id,
            c.title,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion check(s) failed");
        std::process::exit(1);
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn criterion_1() -> Outcome {
    let v = |s| validate_spec(s).unwrap();
    let a = param_count(&v(ClosSpec::new(16, 16, 4, 2, 4)));
    let b = param_count(&v(ClosSpec::new(4, 4, 2, 2, 2)));
    if (a, b) != (96, 24) {
        return Fail(format!("golden counts {a}, {b}"));
    }
    let divisible = (
        1..=12usize,
        1..=8usize,
        1..=12usize,
        1..=8usize,
        1..=10usize,
    )
        .prop_map(|(ri, x, ro, y, rm)| ClosSpec::new(ri * x, ro * y, ri, rm, ro));
    let result = runner(500).run(&divisible, |spec| {
        let vs = validate_spec(spec).unwrap();
        let layer: ClosLayer<f64> =
            ClosLayer::new(&vs, InitRule::Constant(1.0), 0, Activation::None);
        let nonzeros: usize = layer
            .stages()
            .iter()
            .map(|st| {
                st.to_dense()
                    .as_slice()
                    .iter()
                    .filter(|&&w| w != 0.0)
                    .count()
            })
            .sum();
        let s = spec;
        let formula =
            s.middle_routers * (s.inputs + s.outputs + s.input_routers * s.output_routers);
        proptest::prop_assert_eq!(param_count(&vs), formula);
        proptest::prop_assert_eq!(nonzeros, formula);
        Ok(())
    });
    match result {
        Ok(()) => {
            Pass("P(16,16,4,2,4)=96, P(4,4,2,2,2)=24, 500 specs match materialized nonzeros".into())
        }
        Err(e) => Fail(e.to_string()),
    }
}

/// A random valid spec with every stage width at most `max`.
fn random_spec(rng: &mut impl Rng, max: usize) -> ClosSpec {
    let rm = rng.gen_range(1..=8);
    let i = rng.gen_range(1..=max);
    let o = rng.gen_range(1..=max);
    let ri = rng.gen_range(1..=i.min(max / rm));
    let ro = rng.gen_range(1..=o.min(max / rm));
    ClosSpec::new(i, o, ri, rm, ro)
}

fn criterion_2() -> Outcome {
    let mut rng = common::rng(2);
    let mut pairs = 0usize;
    for _ in 0..100 {
        let spec = random_spec(&mut rng, 64);
        let v = validate_spec(spec).unwrap();
        if v.widths().iter().any(|&w| w > 64) {
            return Fail(format!("{spec} has a stage wider than 64"));
        }
        for i in 0..spec.inputs {
            for o in 0..spec.outputs {
                let n = enumerate_paths(&v, i, o).unwrap().len();
                if n != spec.middle_routers || n != path_diversity(&v) {
                    return Fail(format!("{spec}: pair ({i},{o}) has {n} paths"));
                }
                pairs += 1;
            }
        }
    }
    Pass(format!(
        "100 specs, {pairs} (input, output) pairs each with exactly R_m paths"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = common::rng(3);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let spec = random_spec(&mut rng, 48);
        let seed = 300 + case;
        let int_layer = common::integer_clos_layer(spec, seed);
        let xi = common::integer_matrix(4, spec.inputs, seed);
        let yi = int_layer.forward(&xi).unwrap();
        if !yi.bit_eq(&xi.matmul(&int_layer.effective_matrix().unwrap()).unwrap()) {
            return Fail(format!("{spec}: integer weights differ from X·E"));
        }

        let layer = common::clos_layer(spec, seed, Activation::None);
        let x = common::random_matrix(4, spec.inputs, seed);
        let y = layer.forward(&x).unwrap();
        for r in 0..4 {
            let o = common::oracle_forward(&layer, x.row(r));
            if y.row(r)
                .iter()
                .zip(&o)
                .any(|(a, b)| a.to_bits() != b.to_bits())
            {
                return Fail(format!(
                    "{spec}: forward departs from the canonical router order"
                ));
            }
        }
        let e = x.matmul(&layer.effective_matrix().unwrap()).unwrap();
        let scale = e
            .as_slice()
            .iter()
            .fold(f64::MIN_POSITIVE, |s, v| s.max(v.abs()));
        worst = worst.max(y.max_abs_diff(&e) / scale);
    }
    verdict(
        worst <= 1e-12,
        format!(
            "50 specs: integer weights bit-exact vs X·E, real weights bit-exact vs router order, max rel diff vs X·E {worst:.2e} (<= 1e-12)"
        ),
    )
}

fn clos_f64(spec: ClosSpec, seed: u64, act: Activation) -> Layer<f64> {
    common::clos_layer(spec, seed, act).into()
}

fn criterion_4() -> Outcome {
    let dense = |i, o, s| -> Layer<f64> { DenseLayer::new(i, o, true, s).into() };
    let cases: Vec<(&str, Vec<Layer<f64>>, f64)> = vec![
        ("dense", vec![dense(24, 16, 1), dense(16, 5, 2)], 1e-4),
        ("dense linear", vec![dense(24, 10, 3)], 1e-6),
        (
            "lowrank",
            vec![LowRankLayer::new(24, 16, 4, 4).into(), dense(16, 5, 5)],
            1e-4,
        ),
        (
            "lowrank linear",
            vec![LowRankLayer::new(24, 10, 6, 6).into()],
            1e-6,
        ),
        (
            "pruned",
            vec![
                PrunedLayer::new(24, 16, 0.3, 7).unwrap().into(),
                dense(16, 5, 8),
            ],
            1e-4,
        ),
        (
            "pruned linear",
            vec![PrunedLayer::new(24, 10, 0.5, 9).unwrap().into()],
            1e-6,
        ),
        (
            "clos",
            vec![
                clos_f64(ClosSpec::new(24, 16, 4, 3, 4), 10, Activation::Relu),
                dense(16, 5, 11),
            ],
            1e-4,
        ),
        (
            "clos linear",
            vec![clos_f64(
                ClosSpec::new(24, 10, 4, 3, 2),
                12,
                Activation::None,
            )],
            1e-6,
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, layers, bound) in cases {
        let model = Model::new(layers).unwrap();
        let x = common::random_matrix(8, 24, 40);
        let mut r = common::rng(41);
        let labels: Vec<usize> = (0..8).map(|_| r.gen_range(0..model.classes())).collect();
        let rep = grad_check(&model, &x, &labels, &GradCheckOptions::default()).unwrap();
        let enough = rep.checked >= 200.min(model.param_count().trainable());
        let pass = enough && rep.max_rel_error < bound && rep.per_tensor.iter().all(|t| t.1 > 0);
        ok &= pass;
        parts.push(format!(
            "{name} {:.1e}/{} w",
            rep.max_rel_error, rep.checked
        ));
    }
    verdict(ok, parts.join(", "))
}

fn criterion_5() -> Outcome {
    let Some(dir) = common::mnist_dir() else {
        return Skip(format!(
            "MNIST not found; set {} to the IDX directory",
            cli::DATA_DIR_ENV
        ));
    };
    let (train, test) = load_mnist(dir).unwrap();
    let dense: ModelDescriptor = "dense:256".parse().unwrap();
    let clos: ModelDescriptor = "clos:256,8,36,8".parse().unwrap();
    let grid = SweepGrid {
        models: vec![dense, clos],
        seeds: vec![1, 2, 3],
        train: TrainConfig::default(),
    };
    let rows = run_sweep(&grid, &train, &test, 1).unwrap();
    let pick = |m: ModelDescriptor| {
        let mut acc: Vec<f64> = rows
            .iter()
            .filter(|r| r.model == m)
            .map(|r| r.test_acc)
            .collect();
        let params = rows.iter().find(|r| r.model == m).unwrap().params;
        (median(&mut acc), params)
    };
    let (dense_acc, dense_p) = pick(dense);
    let (clos_acc, clos_p) = pick(clos);
    let gap = (dense_acc - clos_acc) * 100.0;
    verdict(
        dense_acc >= 0.97 && 5 * clos_p <= dense_p && gap <= 1.5,
        format!(
            "dense {dense_p} params median acc {dense_acc:.4} (>= 0.97); {clos} {clos_p} params ({:.2}x fewer) median acc {clos_acc:.4}, gap {gap:.2} points (<= 1.5)",
            dense_p as f64 / clos_p as f64
        ),
    )
}

fn criterion_6() -> Outcome {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let mut checked = 0;
    for (spec, torus, seed) in common::torus_suite() {
        let mapping = map_to_torus(spec, torus).unwrap();
        let layer = common::clos_layer(spec, seed, Activation::Relu);
        let x = common::random_matrix(1, spec.inputs, seed + 1);
        let dy = common::random_matrix(1, spec.outputs, seed + 2);
        let fwd = simulate_inference(&mapping, &layer, x.row(0)).unwrap();
        let (reference, cache) = layer.forward_cached(&x).unwrap();
        let back = simulate_backward(&mapping, &layer, Some(&fwd.cache), dy.row(0)).unwrap();
        let wrapped = Layer::Clos(layer.clone());
        let mut grads = wrapped.zero_grads();
        let dx = wrapped
            .backward(&LayerCache::Clos(cache), &dy, &mut grads, true)
            .unwrap()
            .unwrap();
        let hf = fwd.report.direction_histogram();
        let hb = back.report.direction_histogram();
        let predicted = predicted_cycles(&mapping);
        let problems = [
            (
                bits(&fwd.output) != bits(reference.row(0)),
                "inference output",
            ),
            (bits(&back.input_grad) != bits(dx.row(0)), "input gradient"),
            (
                back.weight_grads.len() != grads.len()
                    || back
                        .weight_grads
                        .iter()
                        .zip(&grads)
                        .any(|(a, b)| bits(a) != bits(b)),
                "weight gradients",
            ),
            (hf[0] != 0 || hf[3] != 0, "inference used N/W links"),
            (hb[1] != 0 || hb[2] != 0, "backward used S/E links"),
            (
                fwd.report.total_cycles() != predicted || back.report.total_cycles() != predicted,
                "cycle count",
            ),
        ];
        if let Some((_, what)) = problems.iter().find(|p| p.0) {
            return Fail(format!("{spec} on {torus}: {what}"));
        }
        checked += 1;
    }
    let small = map_to_torus(ClosSpec::new(4, 4, 2, 2, 2), TorusConfig::new(2, 2)).unwrap();
    let layer = common::clos_layer(ClosSpec::new(4, 4, 2, 2, 2), 1, Activation::Relu);
    let total = simulate_inference(&small, &layer, &[0.5, -1.0, 0.25, 2.0])
        .unwrap()
        .report
        .total_cycles();
    verdict(
        checked == 20 && total == 6,
        format!("{checked} cases bit-identical, N=W=0 forward, E=S=0 backward, cycles = prediction; (4,4,2,2,2) on 2x2 takes {total} cycles"),
    )
}

fn criterion_7() -> Outcome {
    let Some(dir) = common::mnist_dir() else {
        return Skip(format!(
            "MNIST not found; set {} to the IDX directory",
            cli::DATA_DIR_ENV
        ));
    };
    let (train, test) = load_mnist(dir).unwrap();
    let test = test.take(1000);
    let model: ModelDescriptor = "dense:256".parse().unwrap();
    let rows = epoch_timing(
        &model,
        &[8, 32, 128, 512],
        3,
        1,
        Precision::F32,
        &train,
        &test,
    )
    .unwrap();
    let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    let listing: Vec<String> = rows.iter().map(|(b, s)| format!("{b}:{s:.3}s")).collect();
    verdict(
        monotone,
        format!(
            "median epoch seconds {}; non-increasing: {monotone}",
            listing.join(" ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let data = synthetic_teacher(cli::synthetic_teacher_spec(), 600, 7, 0.0).unwrap();
    let (train, test) = (
        data.subset(&(0..500).collect::<Vec<_>>()),
        data.subset(&(500..600).collect::<Vec<_>>()),
    );
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let mut same = true;
    for desc in [
        "dense:32",
        "lowrank:32,4",
        "pruned:32,0.2",
        "clos:32,28,4,4",
    ] {
        let m: ModelDescriptor = desc.parse().unwrap();
        for precision in [Precision::F32, Precision::F64] {
            let config = TrainConfig {
                precision,
                ..config.clone()
            };
            let go = || match precision {
                Precision::F32 => train_model::<f32>(&m, &config, &train, &test).unwrap(),
                Precision::F64 => train_model::<f64>(&m, &config, &train, &test).unwrap(),
            };
            let (ra, ca) = go();
            let (rb, cb) = go();
            same &= ra.same_results(&rb)
                && ra.to_csv(false).unwrap() == rb.to_csv(false).unwrap()
                && ca == cb;
        }
    }
    let grid = SweepGrid {
        models: ["dense:32", "clos:32,28,4,4", "dense:256"]
            .iter()
            .map(|d| d.parse().unwrap())
            .collect(),
        seeds: vec![1, 2],
        train: config,
    };
    let a = rows_to_csv(&run_sweep(&grid, &train, &test, 1).unwrap()).unwrap();
    let b = rows_to_csv(&run_sweep(&grid, &train, &test, 1).unwrap()).unwrap();
    verdict(
        same && a == b,
        format!("reports and checkpoints for 4 kinds x 2 precisions identical: {same}; sweep CSVs identical: {}", a == b),
    )
}
