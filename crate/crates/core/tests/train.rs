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

mod common;

use closnet::checkpoint;
use closnet::data::{synthetic_separable, synthetic_teacher, Dataset};
use closnet::layers::{
    Activation, BlockSparseStage, ClosLayer, DenseLayer, InitRule, Layer, LowRankLayer, PrunedLayer,
};
use closnet::topology::ClosSpec;
use closnet::train::{
    backward_model, evaluate, forward_model, grad_check, loss_softmax_xent, sgd_step, train,
    GradCheckOptions, Model, Sgd, TrainConfig,
};
use closnet::{Error, Matrix};
use rand::Rng;

fn clos(spec: ClosSpec, seed: u64, act: Activation) -> Layer<f64> {
    ClosLayer::new(&spec.validate().unwrap(), InitRule::BlockGlorot, seed, act).into()
}

fn labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut r = common::rng(seed);
    (0..n).map(|_| r.gen_range(0..classes)).collect()
}

/// Models under gradient check, paired with their bound.
fn gradcheck_models() -> Vec<(&'static str, Model<f64>, f64)> {
    let m = |layers: Vec<Layer<f64>>| Model::new(layers).unwrap();
    vec![
        (
            "dense",
            m(vec![
                DenseLayer::new(12, 8, true, 1).into(),
                DenseLayer::new(8, 4, true, 2).into(),
            ]),
            1e-6,
        ),
        (
            "dense linear",
            m(vec![DenseLayer::new(12, 4, true, 3).into()]),
            1e-6,
        ),
        (
            "lowrank",
            m(vec![
                LowRankLayer::new(12, 8, 3, 4).into(),
                DenseLayer::new(8, 4, true, 5).into(),
            ]),
            1e-4,
        ),
        (
            "lowrank linear",
            m(vec![LowRankLayer::new(12, 4, 2, 6).into()]),
            1e-6,
        ),
        (
            "pruned",
            m(vec![
                PrunedLayer::new(12, 8, 0.4, 7).unwrap().into(),
                DenseLayer::new(8, 4, true, 8).into(),
            ]),
            1e-6,
        ),
        (
            "pruned linear",
            m(vec![PrunedLayer::new(12, 4, 0.5, 9).unwrap().into()]),
            1e-6,
        ),
        (
            "clos relu",
            m(vec![
                clos(ClosSpec::new(12, 8, 3, 2, 2), 10, Activation::Relu),
                DenseLayer::new(8, 4, true, 11).into(),
            ]),
            1e-4,
        ),
        (
            "clos linear",
            m(vec![clos(
                ClosSpec::new(12, 6, 3, 2, 3),
                12,
                Activation::None,
            )]),
            1e-6,
        ),
        (
            "clos uneven relu",
            m(vec![
                clos(ClosSpec::new(13, 7, 3, 3, 2), 13, Activation::Relu),
                DenseLayer::new(7, 4, true, 14).into(),
            ]),
            1e-4,
        ),
    ]
}

#[test]
fn gradients_match_central_differences() {
    for (name, model, bound) in gradcheck_models() {
        let x = common::random_matrix(6, 12 + usize::from(name.contains("uneven")), 20);
        let y = labels(6, model.classes(), 21);
        let report = grad_check(&model, &x, &y, &GradCheckOptions::default()).unwrap();
        eprintln!(
            "{name}: max rel error {:.3e} over {} weights",
            report.max_rel_error, report.checked
        );
        assert!(
            report.checked >= 200.min(model.param_count().trainable()),
            "{name}: {} checked",
            report.checked
        );
        assert!(
            report.per_tensor.iter().all(|(_, n, _)| *n > 0),
            "{name}: a tensor was skipped"
        );
        assert!(
            report.max_rel_error < bound,
            "{name}: {} >= {bound}",
            report.max_rel_error
        );
    }
}

#[test]
fn pruned_gradients_vanish_outside_mask() {
    let layer = PrunedLayer::<f64>::new(10, 6, 0.3, 3).unwrap();
    let mask = layer.mask().clone();
    let model = Model::new(vec![layer.into()]).unwrap();
    let x = common::random_matrix(5, 10, 1);
    let (logits, cache) = forward_model(&model, &x).unwrap();
    let (_, d) = loss_softmax_xent(&logits, &labels(5, 6, 2)).unwrap();
    let grads = backward_model(&model, &cache, &d).unwrap();
    let Layer::Pruned(p) = &model.layers()[0] else {
        unreachable!()
    };
    let dense = p.densify_grad(&grads.layers[0][0]);
    for i in 0..10 {
        for o in 0..6 {
            if !mask.contains(i, o) {
                assert_eq!(dense.get(i, o), 0.0);
            }
        }
    }
    assert!(!grads.is_zero());
}

#[test]
fn forward_shapes_and_symmetric_loss() {
    let model = Model::new(vec![
        clos(ClosSpec::new(784, 256, 28, 4, 16), 1, Activation::Relu),
        DenseLayer::new(256, 10, true, 2).into(),
    ])
    .unwrap();
    let x = common::random_matrix(32, 784, 3);
    let (logits, _) = forward_model(&model, &x).unwrap();
    assert_eq!((logits.rows(), logits.cols()), (32, 10));
    assert!(matches!(
        forward_model(&model, &common::random_matrix(2, 783, 3)),
        Err(Error::DimensionMismatch { .. })
    ));

    let mut zero = Model::new(vec![DenseLayer::<f64>::new(5, 10, true, 1).into()]).unwrap();
    for p in zero.params_mut() {
        p.fill(0.0);
    }
    let (logits, _) = forward_model(&zero, &common::random_matrix(4, 5, 9)).unwrap();
    let (loss, _) = loss_softmax_xent(&logits, &[0, 3, 9, 2]).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn identity_layer_passes_input_through() {
    let model = Model::new(vec![DenseLayer::from_weights(
        Matrix::<f64>::identity(6),
        None,
    )
    .unwrap()
    .into()])
    .unwrap();
    let x = common::random_matrix(3, 6, 4);
    let (logits, _) = forward_model(&model, &x).unwrap();
    assert!(logits.bit_eq(&x));
}

#[test]
fn loss_limits_and_gradient() {
    let equal = Matrix::from_vec(2, 10, vec![0.7; 20]).unwrap();
    let (loss, _) = loss_softmax_xent(&equal, &[1, 8]).unwrap();
    assert!((loss - std::f64::consts::LN_10).abs() < 1e-12);

    let mut margin = Matrix::<f64>::zeros(3, 10);
    for (s, &l) in [2usize, 5, 9].iter().enumerate() {
        margin.set(s, l, 40.0);
    }
    assert!(loss_softmax_xent(&margin, &[2, 5, 9]).unwrap().0 < 1e-6);
    assert!(matches!(
        loss_softmax_xent(&margin, &[2, 5, 10]),
        Err(Error::LabelOutOfRange {
            label: 10,
            classes: 10
        })
    ));

    let logits = common::random_matrix(4, 5, 11).map(|v| 3.0 * v);
    let y = labels(4, 5, 12);
    let (_, grad) = loss_softmax_xent(&logits, &y).unwrap();
    let eps = 1e-5;
    for s in 0..4 {
        for c in 0..5 {
            let mut plus = logits.clone();
            plus.set(s, c, logits.get(s, c) + eps);
            let mut minus = logits.clone();
            minus.set(s, c, logits.get(s, c) - eps);
            let fd = (loss_softmax_xent(&plus, &y).unwrap().0
                - loss_softmax_xent(&minus, &y).unwrap().0)
                / (2.0 * eps);
            let g = grad.get(s, c);
            assert!(
                (g - fd).abs() / g.abs().max(fd.abs()).max(1e-3) < 1e-6,
                "({s},{c}) {g} vs {fd}"
            );
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradients_and_stale_caches_fail() {
    for (_, model, _) in gradcheck_models()
        .into_iter()
        .filter(|(n, _, _)| !n.contains("uneven"))
    {
        let x = common::random_matrix(3, 12, 5);
        let (logits, cache) = forward_model(&model, &x).unwrap();
        let zero = Matrix::zeros(logits.rows(), logits.cols());
        assert!(backward_model(&model, &cache, &zero).unwrap().is_zero());
        let wrong = Matrix::zeros(logits.rows() + 1, logits.cols());
        assert!(matches!(
            backward_model(&model, &cache, &wrong),
            Err(Error::StaleCache(_))
        ));
    }
}

#[test]
fn sgd_recurrences() {
    let mut w = vec![0.5f64, -2.0, 3.0];
    let g = w.clone();
    let mut v = vec![vec![0.0; 3]];
    sgd_step(&mut [w.as_mut_slice()], &[g.as_slice()], &mut v, 1.0, 0.0).unwrap();
    assert_eq!(w, vec![0.0; 3]);

    // scalar oracle of v <- m v - lr g; w <- w + v
    let (mut ow, mut ov) = (0.0f64, 0.0f64);
    let mut w = vec![0.0f64];
    let mut v = vec![vec![0.0]];
    for _ in 0..2 {
        ov = 0.9 * ov - 0.1 * 1.0;
        ow += ov;
        sgd_step(&mut [w.as_mut_slice()], &[&[1.0]], &mut v, 0.1, 0.9).unwrap();
    }
    assert_eq!(w[0].to_bits(), ow.to_bits());
    assert!((w[0] + 0.29).abs() < 1e-15);

    let mut short = vec![0.0f64; 2];
    assert!(sgd_step(
        &mut [short.as_mut_slice()],
        &[&[1.0]],
        &mut [vec![0.0; 2]],
        0.1,
        0.0
    )
    .is_err());
}

#[test]
fn small_steps_decrease_batch_loss() {
    for (name, mut model, _) in gradcheck_models()
        .into_iter()
        .filter(|(n, _, _)| !n.contains("uneven"))
    {
        let x = common::random_matrix(16, 12, 30);
        let y = labels(16, model.classes(), 31);
        let mut opt = Sgd::new(&model, 1e-4, 0.0);
        let mut last = f64::INFINITY;
        for step in 0..50 {
            let (logits, cache) = forward_model(&model, &x).unwrap();
            let (loss, d) = loss_softmax_xent(&logits, &y).unwrap();
            assert!(loss < last, "{name}: step {step} loss {loss} >= {last}");
            last = loss;
            let grads = backward_model(&model, &cache, &d).unwrap();
            opt.step(&mut model, &grads).unwrap();
        }
    }
}

#[test]
fn training_preserves_sparsity_structure() {
    let spec = ClosSpec::new(16, 8, 4, 2, 2);
    let mut model = Model::<f64>::new(vec![
        PrunedLayer::new(16, 16, 0.25, 2).unwrap().into(),
        clos(spec, 3, Activation::Relu),
    ])
    .unwrap();
    let before = model.param_count();
    let Layer::Pruned(p) = &model.layers()[0] else {
        unreachable!()
    };
    let mask = p.mask().clone();
    let ds = synthetic_teacher(spec, 64, 4, 0.0).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    train(&mut model, &ds, &ds, &cfg).unwrap();
    assert_eq!(model.param_count(), before);
    let Layer::Pruned(p) = &model.layers()[0] else {
        unreachable!()
    };
    assert_eq!(p.mask(), &mask);
    let dense = p.to_dense();
    for i in 0..16 {
        for o in 0..16 {
            if !mask.contains(i, o) {
                assert_eq!(dense.get(i, o), 0.0);
            }
        }
    }
    let Layer::Clos(c) = &model.layers()[1] else {
        unreachable!()
    };
    let fresh = ClosLayer::<f64>::new(
        &spec.validate().unwrap(),
        InitRule::BlockGlorot,
        3,
        Activation::Relu,
    );
    for (a, b) in c.stages().iter().zip(fresh.stages()) {
        let shapes = |s: &BlockSparseStage<f64>| {
            s.blocks()
                .iter()
                .map(|m| (m.rows(), m.cols()))
                .collect::<Vec<_>>()
        };
        assert_eq!(shapes(a), shapes(b));
    }
    assert_ne!(c, &fresh);
}

fn separable() -> Dataset {
    synthetic_separable(200, 10, 0.05, 5).unwrap()
}

#[test]
fn separable_data_is_fit_exactly() {
    let ds = separable();
    let mut model = Model::<f32>::new(vec![
        DenseLayer::new(10, 16, true, 1).into(),
        DenseLayer::new(16, 2, true, 2).into(),
    ])
    .unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &ds, &ds, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 20);
    assert_eq!(evaluate(&model, &ds).unwrap(), 1.0);
    assert_eq!(report.final_test_acc(), 1.0);
}

#[test]
fn clos_student_fits_clos_teacher() {
    let spec = ClosSpec::new(32, 4, 4, 2, 2);
    let ds = synthetic_teacher(spec, 300, 8, 0.0).unwrap();
    let layer = ClosLayer::<f32>::new(
        &spec.validate().unwrap(),
        InitRule::BlockGlorot,
        9,
        Activation::None,
    );
    let mut model = Model::new(vec![layer.into()]).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 8,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    train(&mut model, &ds, &ds, &cfg).unwrap();
    let acc = evaluate(&model, &ds).unwrap();
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn training_is_bit_deterministic() {
    let ds = separable();
    let run = || {
        let mut model = Model::<f32>::new(vec![
            ClosLayer::new(
                &ClosSpec::new(10, 8, 2, 2, 2).validate().unwrap(),
                InitRule::BlockGlorot,
                1,
                Activation::Relu,
            )
            .into(),
            DenseLayer::new(8, 2, true, 2).into(),
        ])
        .unwrap();
        let report = train(
            &mut model,
            &ds,
            &ds,
            &TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        (report, checkpoint::encode(&model))
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert!(a.same_results(&b));
    assert_eq!(a.to_csv(false).unwrap(), b.to_csv(false).unwrap());
    assert_eq!(ca, cb);
    assert!(a
        .epochs
        .iter()
        .all(|e| (0.0..=1.0).contains(&e.train_acc) && (0.0..=1.0).contains(&e.test_acc)));
}

#[test]
fn training_rejects_bad_inputs() {
    let ds = separable();
    let mut model = Model::<f32>::new(vec![DenseLayer::new(10, 2, true, 1).into()]).unwrap();
    let empty = ds.take(0);
    assert!(matches!(
        train(&mut model, &empty, &ds, &TrainConfig::default()),
        Err(Error::EmptyDataset)
    ));
    for cfg in [
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(
            train(&mut model, &ds, &ds, &cfg),
            Err(Error::Config(_))
        ));
    }
}
