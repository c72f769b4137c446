//! Central finite-difference verification of the analytic gradients.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{Mode, Model};
use crate::nn::GradientSet;
use crate::train::{multitask_loss, multitask_loss_grad, TaskWeights};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const RESOLUTION_FACTOR: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Layer name and flat index (weights row-major, then bias) of the
    /// worst parameter.
    pub worst: Option<(String, usize)>,
    pub n_params: usize,
}

/// Eval-mode analytic gradient of the weighted multi-task loss.
pub fn analytic_gradients(
    model: &Model,
    batch: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weights: &TaskWeights,
) -> Result<GradientSet> {
    let (pred, trace) = model.forward(batch, Mode::Eval, 0)?;
    let (_, d_out) = multitask_loss_grad(pred.view(), target, weights)?;
    model.backward(&trace, d_out.view())
}

fn loss_at(model: &Model, batch: ArrayView2<f64>, target: ArrayView2<f64>, weights: &TaskWeights) -> Result<f64> {
    let pred = model.predict(batch)?;
    let loss = multitask_loss(pred.view(), target, weights)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss} during gradient check")));
    }
    Ok(loss)
}

/// Compares `analytic` against central differences with step `h`, using
/// `|a − n| / max(|a|, |n|, floor)` per parameter. `floor` is
/// `RESOLUTION_FACTOR · ε · max(|loss|, 1) / h`, the size below which a
/// central difference is dominated by rounding, so parameters whose
/// gradients both sit under it (dead ReLU units) are compared absolutely.
pub fn compare_gradients(
    model: &Model,
    analytic: &GradientSet,
    batch: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weights: &TaskWeights,
    h: f64,
) -> Result<GradCheckReport> {
    let names = model.layer_names();
    if analytic.layers.len() != names.len() {
        return Err(Error::Shape("gradient set does not match the model".into()));
    }
    let base = loss_at(model, batch, target, weights)?;
    let floor = RESOLUTION_FACTOR * f64::EPSILON * base.abs().max(1.0) / h;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        n_params: 0,
    };

    for (li, grad) in analytic.layers.iter().enumerate() {
        let analytic_flat: Vec<f64> = grad.weights.iter().chain(grad.bias.iter()).copied().collect();
        let n_weights = grad.weights.len();
        for (pi, &a) in analytic_flat.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Numeric(format!("non-finite analytic gradient in {}", names[li])));
            }
            let mut nudge = |delta: f64| -> Result<f64> {
                let layer = probe.layers_mut().nth(li).expect("layer index");
                let slot = if pi < n_weights {
                    &mut layer.weights.as_slice_mut().expect("standard layout")[pi]
                } else {
                    &mut layer.bias.as_slice_mut().expect("contiguous")[pi - n_weights]
                };
                let original = *slot;
                *slot = original + delta;
                let loss = loss_at(&probe, batch, target, weights);
                let layer = probe.layers_mut().nth(li).expect("layer index");
                if pi < n_weights {
                    layer.weights.as_slice_mut().expect("standard layout")[pi] = original;
                } else {
                    layer.bias.as_slice_mut().expect("contiguous")[pi - n_weights] = original;
                }
                loss
            };
            let up = nudge(h)?;
            let down = nudge(-h)?;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.n_params += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(rel);
                report.worst = Some((names[li].clone(), pi));
            }
        }
    }
    Ok(report)
}

/// Standard-normal inputs and targets sized for `model`.
pub fn random_problem(model: &Model, rows: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |cols: usize| Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng));
    let x = draw(model.input_dim());
    let y = draw(model.output_dim());
    (x, y)
}

/// Max relative error between backpropagated and finite-difference
/// gradients over every parameter, with dropout disabled.
pub fn grad_check(
    model: &Model,
    batch: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weights: &TaskWeights,
) -> Result<f64> {
    let analytic = analytic_gradients(model, batch, target, weights)?;
    Ok(compare_gradients(model, &analytic, batch, target, weights, DEFAULT_STEP)?.max_relative_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build, NetworkSpec, StageSpec};
    use crate::data::FeatureLayout;

    fn normal(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    /// Nonzero biases keep tiny nets off the ReLU kink at exactly zero.
    fn jitter_biases(model: &mut Model, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in model.layers_mut() {
            l.bias.mapv_inplace(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        }
    }

    fn tiny_layout() -> FeatureLayout {
        FeatureLayout::new(5, 4, 2)
    }

    #[test]
    fn small_models_of_each_class() {
        let specs = [
            NetworkSpec::baseline(StageSpec::new(2, 6), 3),
            NetworkSpec::simple(StageSpec::new(2, 5), 3),
            NetworkSpec::extended(StageSpec::new(2, 5), StageSpec::new(3, 7), 1),
        ];
        for spec in specs {
            let spec = spec.with_layout(tiny_layout()).off_grid();
            let mut model = build(&spec, 21).unwrap();
            jitter_biases(&mut model, 22);
            let x = normal(6, tiny_layout().width(), 1);
            let y = normal(6, spec.n_tasks, 2);
            let w = TaskWeights::default_for(spec.n_tasks);
            let err = grad_check(&model, x.view(), y.view(), &w).unwrap();
            assert!(err < 1e-4, "{spec}: {err}");
        }
    }

    #[test]
    fn identity_single_layer_is_near_exact() {
        let spec = NetworkSpec::baseline(StageSpec::new(1, 3), 2)
            .with_layout(tiny_layout())
            .off_grid();
        let mut model = build(&spec, 4).unwrap();
        // Drop the hidden layer's non-linearity: identity everywhere.
        for l in model.layers_mut() {
            l.activation = crate::nn::Activation::Identity;
        }
        let x = normal(4, tiny_layout().width(), 3);
        let y = normal(4, 2, 4);
        let err = grad_check(&model, x.view(), y.view(), &TaskWeights::new(vec![1.0, 2.0])).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn all_zero_parameters() {
        let spec = NetworkSpec::extended(StageSpec::new(2, 4), StageSpec::new(2, 4), 3)
            .with_layout(tiny_layout())
            .off_grid();
        let mut model = build(&spec, 0).unwrap();
        for l in model.layers_mut() {
            l.weights.fill(0.0);
        }
        let x = normal(4, tiny_layout().width(), 5);
        let y = normal(4, 3, 6);
        let w = TaskWeights::default_for(3);
        let analytic = analytic_gradients(&model, x.view(), y.view(), &w).unwrap();
        let report = compare_gradients(&model, &analytic, x.view(), y.view(), &w, DEFAULT_STEP).unwrap();
        assert!(report.max_relative_error < 1e-4);
        // Only the output bias carries gradient.
        let n = analytic.layers.len();
        for g in &analytic.layers[..n - 1] {
            assert!(g.weights.iter().chain(g.bias.iter()).all(|&v| v == 0.0));
        }
        assert!(analytic.layers[n - 1].bias.iter().all(|&v| v != 0.0));
    }

    #[test]
    fn corrupted_gradient_detected() {
        let spec = NetworkSpec::simple(StageSpec::new(2, 5), 1)
            .with_layout(tiny_layout())
            .off_grid();
        let model = build(&spec, 8).unwrap();
        let x = normal(4, tiny_layout().width(), 9);
        let y = normal(4, 1, 10);
        let w = TaskWeights::default_for(1);
        let mut analytic = analytic_gradients(&model, x.view(), y.view(), &w).unwrap();
        analytic.scale(1.01);
        let report = compare_gradients(&model, &analytic, x.view(), y.view(), &w, DEFAULT_STEP).unwrap();
        assert!(report.max_relative_error > 1e-3);
    }
}
