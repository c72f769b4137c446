use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::GradientSet;

/// First and second moment estimates, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(model: &Model) -> Self {
        Self {
            m: model.zero_grads(),
            v: model.zero_grads(),
            t: 0,
        }
    }
}

/// Adam kernel over flat slices at step `t` (already incremented, so the
/// first call uses `t = 1`).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    config: &TrainConfig,
) {
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}

/// One Adam step over every parameter of `model`. Nothing is modified if
/// any gradient is non-finite.
pub fn adam_step(
    model: &mut Model,
    grads: &GradientSet,
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let n_layers = model.layers().count();
    if grads.layers.len() != n_layers || state.m.layers.len() != n_layers {
        return Err(Error::Shape(format!(
            "{} gradient blocks and {} optimizer blocks for {n_layers} layers",
            grads.layers.len(),
            state.m.layers.len()
        )));
    }
    let names = model.layer_names();
    for ((layer, g), name) in model.layers().zip(&grads.layers).zip(&names) {
        if g.weights.dim() != layer.weights.dim() || g.bias.dim() != layer.bias.dim() {
            return Err(Error::Shape(format!("gradient for {name} has the wrong shape")));
        }
        if let Some(bad) = g.weights.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {bad} in {name} weights")));
        }
        if let Some(bad) = g.bias.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {bad} in {name} bias")));
        }
    }

    state.t += 1;
    let t = state.t;
    let blocks = model
        .layers_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()));
    for ((layer, g), (m, v)) in blocks {
        adam_update(
            layer.weights.as_slice_mut().expect("standard layout"),
            g.weights.as_slice().expect("standard layout"),
            m.weights.as_slice_mut().expect("standard layout"),
            v.weights.as_slice_mut().expect("standard layout"),
            t,
            config,
        );
        adam_update(
            layer.bias.as_slice_mut().expect("contiguous"),
            g.bias.as_slice().expect("contiguous"),
            m.bias.as_slice_mut().expect("contiguous"),
            v.bias.as_slice_mut().expect("contiguous"),
            t,
            config,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build, NetworkSpec, StageSpec};
    use crate::data::FeatureLayout;

    fn cfg() -> TrainConfig {
        TrainConfig::for_tasks(1, 0)
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg());
        // m̂ = v̂ = 1 on the first step.
        assert!((p[0] - (1.0 - 1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let spec = NetworkSpec::simple(StageSpec::new(2, 16), 1);
        let mut model = build(&spec, 3).unwrap();
        let before = model.clone();
        let grads = model.zero_grads();
        let mut state = OptimizerState::new(&model);
        adam_step(&mut model, &grads, &mut state, &cfg()).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let spec = NetworkSpec::baseline(StageSpec::new(1, 2), 1)
            .with_layout(FeatureLayout::new(1, 1, 1))
            .off_grid();
        let mut model = build(&spec, 0).unwrap();
        let before = model.clone();
        let mut grads = model.zero_grads();
        grads.layers[1].bias[0] = f64::NAN;
        let mut state = OptimizerState::new(&model);
        let err = adam_step(&mut model, &grads, &mut state, &cfg()).unwrap_err();
        assert!(err.to_string().contains("output bias"), "{err}");
        assert_eq!(model, before);
        assert_eq!(state.t, 0);
    }
}
