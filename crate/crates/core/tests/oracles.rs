use furcnet::data::{make_split, standardize, synth_generate, SynthConfig};
use furcnet::eval::percent_improvement;
use furcnet::model_io::{deserialize, serialize};
use furcnet::train::{multitask_loss, TaskWeights};
use furcnet::{build, param_count, Mode, Model, NetworkSpec, StageSpec};
use ndarray::Array2;
use proptest::prelude::*;

/// Plain-loop forward pass over the model's own weights.
fn loop_forward(model: &Model, x: &Array2<f64>) -> Vec<Vec<f64>> {
    let dense = |input: &[f64], w: &Array2<f64>, b: &ndarray::Array1<f64>, relu: bool| -> Vec<f64> {
        (0..w.ncols())
            .map(|j| {
                let mut z = b[j];
                for (i, v) in input.iter().enumerate() {
                    z += v * w[[i, j]];
                }
                if relu { z.max(0.0) } else { z }
            })
            .collect()
    };
    let last = model.trunk().len() - 1;
    x.rows()
        .into_iter()
        .map(|row| {
            let row: Vec<f64> = row.to_vec();
            let mut merged = Vec::new();
            for branch in model.branches() {
                let mut h = row[branch.input.clone()].to_vec();
                for l in &branch.layers {
                    h = dense(&h, &l.weights, &l.bias, true);
                }
                merged.extend(h);
            }
            merged.extend_from_slice(&row[model.passthrough()]);
            for (k, l) in model.trunk().iter().enumerate() {
                merged = dense(&merged, &l.weights, &l.bias, k != last);
            }
            merged
        })
        .collect()
}

fn specs() -> Vec<NetworkSpec> {
    vec![
        NetworkSpec::baseline(StageSpec::new(2, 16), 3),
        NetworkSpec::simple(StageSpec::new(3, 16), 1),
        NetworkSpec::extended(StageSpec::new(2, 16), StageSpec::new(2, 32), 3),
    ]
}

fn inputs(rows: usize, seed: u64) -> Array2<f64> {
    let (data, _) = synth_generate(&SynthConfig::new(rows, seed, 1.0, 0.0)).unwrap();
    standardize(&data, None).unwrap().0.features().to_owned()
}

#[test]
fn forward_matches_loop_oracle() {
    let x = inputs(7, 1);
    for spec in specs() {
        let mut model = build(&spec, 4).unwrap();
        for (k, l) in model.layers_mut().enumerate() {
            l.bias.mapv_inplace(|_| 0.01 * k as f64 - 0.02);
        }
        let fast = model.predict(x.view()).unwrap();
        let (traced, _) = model.forward(x.view(), Mode::Eval, 0).unwrap();
        let slow = loop_forward(&model, &x);
        for (i, row) in slow.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                assert!((fast[[i, t]] - v).abs() <= 1e-12 * v.abs().max(1.0), "{spec}: {} vs {v}", fast[[i, t]]);
                assert_eq!(fast[[i, t]], traced[[i, t]]);
            }
        }
    }
}

#[test]
fn parameter_counts_match_closed_form() {
    let cases = [
        (NetworkSpec::baseline(StageSpec::new(2, 64), 3), 16_579),
        (NetworkSpec::simple(StageSpec::new(2, 64), 3), 20_873),
        (NetworkSpec::extended(StageSpec::new(2, 64), StageSpec::new(2, 128), 3), 54_147),
        (NetworkSpec::extended(StageSpec::new(5, 512), StageSpec::new(5, 512), 1), 3_775_489),
        (NetworkSpec::baseline(StageSpec::new(4, 256), 1), 246_529),
    ];
    for (spec, expected) in cases {
        assert_eq!(param_count(&build(&spec, 0).unwrap()), expected, "{spec}");
    }
}

#[test]
fn serialized_models_predict_bit_identically() {
    let x = inputs(5, 2);
    for spec in specs() {
        let model = build(&spec.with_dropout(0.3), 8).unwrap();
        let back = deserialize(&serialize(&model)).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(x.view()).unwrap(), model.predict(x.view()).unwrap());
    }
}

#[test]
fn eval_mode_ignores_dropout_seed() {
    let x = inputs(6, 3);
    let model = build(&NetworkSpec::simple(StageSpec::new(2, 16), 3).with_dropout(0.5), 1).unwrap();
    let (a, trace) = model.forward(x.view(), Mode::Eval, 1).unwrap();
    let (b, _) = model.forward(x.view(), Mode::Eval, 2).unwrap();
    assert_eq!(a, b);
    assert!(trace.masks_all_ones());
    let (c, _) = model.forward(x.view(), Mode::Train, 1).unwrap();
    let (d, _) = model.forward(x.view(), Mode::Train, 2).unwrap();
    assert_ne!(c, d);
}

#[test]
fn train_masks_are_inverted_dropout() {
    let x = inputs(40, 4);
    let model = build(&NetworkSpec::simple(StageSpec::new(2, 64), 1).with_dropout(0.25), 0).unwrap();
    let (_, trace) = model.forward(x.view(), Mode::Train, 9).unwrap();
    let mut kept = 0usize;
    let mut total = 0usize;
    for (t, layer) in trace.layers().zip(model.layers()) {
        if layer.dropout_rate == 0.0 {
            assert!(t.mask.iter().all(|&m| m == 1.0));
            continue;
        }
        for &m in &t.mask {
            assert!(m == 0.0 || (m - 1.0 / 0.75).abs() < 1e-15, "mask value {m}");
            kept += usize::from(m != 0.0);
            total += 1;
        }
    }
    let rate = kept as f64 / total as f64;
    assert!((rate - 0.75).abs() < 0.05, "keep rate {rate}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn improvement_reconstructs_model_rmse(b in 1e-4f64..10.0, m in 0.0f64..20.0) {
        let p = percent_improvement(b, m).unwrap();
        prop_assert!((b * (1.0 - p / 100.0) - m).abs() <= 1e-12 * b.max(m).max(1.0));
        prop_assert_eq!(p > 0.0, m < b);
    }

    #[test]
    fn splits_partition_rows(n in 8usize..3000, seed in any::<u64>()) {
        let plan = make_split(n, seed).unwrap();
        let mut seen = vec![false; n];
        for &i in plan.test.iter().chain(plan.folds.iter().flatten()) {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
        prop_assert!((plan.test.len() as f64 - n as f64 / 4.0).abs() <= 1.0);
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
        for k in 0..plan.folds.len() {
            let train = plan.train_rows(k);
            prop_assert_eq!(train.len() + plan.folds[k].len() + plan.test.len(), n);
            prop_assert!(train.iter().all(|i| !plan.folds[k].contains(i) && !plan.test.contains(i)));
        }
    }

    #[test]
    fn loss_is_linear_in_weights(
        rows in 1usize..12,
        seed in any::<u64>(),
        w in prop::collection::vec(0.01f64..10.0, 3),
        k in 0.1f64..100.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = Array2::from_shape_simple_fn((rows, 3), || rng.random_range(-3.0..3.0));
        let y = Array2::from_shape_simple_fn((rows, 3), || rng.random_range(-3.0..3.0));
        let base = multitask_loss(p.view(), y.view(), &TaskWeights::new(w.clone())).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * k).collect();
        let big = multitask_loss(p.view(), y.view(), &TaskWeights::new(scaled)).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((big - k * base).abs() <= 1e-10 * big.max(1.0));
        prop_assert_eq!(multitask_loss(y.view(), y.view(), &TaskWeights::new(w)).unwrap(), 0.0);
    }
}
