//! A built network: stage-1 branches over input column slices, a trunk over
//! their concatenated outputs plus passthrough columns, and exact
//! backpropagation through both.

use std::ops::Range;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::NetworkSpec;
use crate::error::{Error, Result};
use crate::nn::{DenseLayer, GradientSet, LayerGrad, LayerTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active (inverted: kept units scaled by `1/(1-rate)`).
    Train,
    /// Dropout is the identity.
    Eval,
}

/// A stage-1 sub-network reading a contiguous slice of the input columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub input: Range<usize>,
    pub layers: Vec<DenseLayer>,
}

impl Branch {
    fn out_width(&self) -> usize {
        self.layers.last().map_or(self.input.len(), |l| l.out_dim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    branches: Vec<Branch>,
    passthrough: Range<usize>,
    trunk: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct ActivationTrace {
    pub mode: Mode,
    pub batch_size: usize,
    pub branches: Vec<Vec<LayerTrace>>,
    pub trunk: Vec<LayerTrace>,
}

impl ActivationTrace {
    pub fn layers(&self) -> impl Iterator<Item = &LayerTrace> {
        self.branches.iter().flatten().chain(self.trunk.iter())
    }

    pub fn masks_all_ones(&self) -> bool {
        self.layers().all(|t| t.mask.iter().all(|&m| m == 1.0))
    }
}

impl Model {
    pub(crate) fn from_parts(
        spec: NetworkSpec,
        branches: Vec<Branch>,
        passthrough: Range<usize>,
        trunk: Vec<DenseLayer>,
    ) -> Result<Self> {
        let model = Self {
            spec,
            branches,
            passthrough,
            trunk,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let chain = |name: &str, layers: &[DenseLayer], mut width: usize| -> Result<usize> {
            for (i, l) in layers.iter().enumerate() {
                if l.in_dim() != width || l.bias.len() != l.out_dim() {
                    return Err(Error::Shape(format!(
                        "{name} layer {i}: expected input width {width}, found {}×{} with bias {}",
                        l.in_dim(),
                        l.out_dim(),
                        l.bias.len()
                    )));
                }
                width = l.out_dim();
            }
            Ok(width)
        };
        let mut merged = self.passthrough.len();
        for b in &self.branches {
            if b.input.end > self.input_dim() {
                return Err(Error::Shape(format!("branch {} reads past the input", b.name)));
            }
            merged += chain(&b.name, &b.layers, b.input.len())?;
        }
        if self.trunk.is_empty() {
            return Err(Error::Shape("model has no output layer".into()));
        }
        let out = chain("trunk", &self.trunk, merged)?;
        if out != self.spec.n_tasks {
            return Err(Error::Shape(format!(
                "output width {out} but spec declares {} tasks",
                self.spec.n_tasks
            )));
        }
        Ok(())
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    pub fn passthrough(&self) -> Range<usize> {
        self.passthrough.clone()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.layout.width()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.n_tasks
    }

    /// Layers in canonical order: each branch in turn, then the trunk.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.branches
            .iter()
            .flat_map(|b| b.layers.iter())
            .chain(self.trunk.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.branches
            .iter_mut()
            .flat_map(|b| b.layers.iter_mut())
            .chain(self.trunk.iter_mut())
    }

    /// Canonical-order names used in error messages and model files.
    pub fn layer_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for b in &self.branches {
            names.extend((0..b.layers.len()).map(|i| format!("{}.{i}", b.name)));
        }
        let n = self.trunk.len();
        for i in 0..n {
            if i + 1 == n {
                names.push("output".to_string());
            } else {
                names.push(format!("stage2.{i}"));
            }
        }
        if self.branches.is_empty() {
            for (i, name) in names.iter_mut().enumerate().take(n - 1) {
                *name = format!("mlp.{i}");
            }
        }
        names
    }

    pub fn zero_grads(&self) -> GradientSet {
        GradientSet {
            layers: self.layers().map(LayerGrad::zeros_like).collect(),
        }
    }

    fn check_input(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if batch.nrows() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(())
    }

    /// Runs the network and records everything backpropagation needs.
    /// `seed` drives the dropout masks in train mode and is ignored in eval.
    pub fn forward(
        &self,
        batch: ArrayView2<f64>,
        mode: Mode,
        seed: u64,
    ) -> Result<(Array2<f64>, ActivationTrace)> {
        self.check_input(&batch)?;
        let train = mode == Mode::Train;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut branch_traces = Vec::with_capacity(self.branches.len());
        let mut merged_parts: Vec<Array2<f64>> = Vec::with_capacity(self.branches.len() + 1);
        for branch in &self.branches {
            let mut x = batch.slice(s![.., branch.input.clone()]).to_owned();
            let mut traces = Vec::with_capacity(branch.layers.len());
            for layer in &branch.layers {
                let t = layer.forward(x, train, &mut rng);
                x = t.post.clone();
                traces.push(t);
            }
            merged_parts.push(x);
            branch_traces.push(traces);
        }
        merged_parts.push(batch.slice(s![.., self.passthrough.clone()]).to_owned());
        let views: Vec<_> = merged_parts.iter().map(|a| a.view()).collect();
        let mut x = concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;

        let mut trunk_traces = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let t = layer.forward(x, train, &mut rng);
            x = t.post.clone();
            trunk_traces.push(t);
        }
        let trace = ActivationTrace {
            mode,
            batch_size: batch.nrows(),
            branches: branch_traces,
            trunk: trunk_traces,
        };
        Ok((x, trace))
    }

    /// Eval-mode forward pass without recording a trace.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let run = |mut x: Array2<f64>, layers: &[DenseLayer]| {
            for l in layers {
                let mut z = x.dot(&l.weights);
                z += &l.bias;
                z.mapv_inplace(|v| l.activation.apply(v));
                x = z;
            }
            x
        };
        let mut parts: Vec<Array2<f64>> = self
            .branches
            .iter()
            .map(|b| run(batch.slice(s![.., b.input.clone()]).to_owned(), &b.layers))
            .collect();
        parts.push(batch.slice(s![.., self.passthrough.clone()]).to_owned());
        let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
        let merged = concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(run(merged, &self.trunk))
    }

    /// Exact gradients of the traced computation given `dL/d(output)`.
    /// Batch averaging is the caller's responsibility (fold it into
    /// `output_grad`).
    pub fn backward(
        &self,
        trace: &ActivationTrace,
        output_grad: ArrayView2<f64>,
    ) -> Result<GradientSet> {
        self.check_trace(trace)?;
        if output_grad.dim() != (trace.batch_size, self.output_dim()) {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, expected ({}, {})",
                output_grad.dim(),
                trace.batch_size,
                self.output_dim()
            )));
        }

        let need_merge_grad = !self.branches.is_empty();
        let mut trunk_grads = Vec::with_capacity(self.trunk.len());
        let mut d = output_grad.to_owned();
        for (i, (layer, t)) in self.trunk.iter().zip(&trace.trunk).enumerate().rev() {
            let want_input = i > 0 || need_merge_grad;
            let (g, d_in) = layer.backward(t, d.view(), want_input);
            trunk_grads.push(g);
            if let Some(d_in) = d_in {
                d = d_in;
            }
        }
        trunk_grads.reverse();

        let mut grads = Vec::with_capacity(self.trunk.len() + 8);
        let mut offset = 0;
        for (branch, traces) in self.branches.iter().zip(&trace.branches) {
            let w = branch.out_width();
            let mut d_branch = d.slice(s![.., offset..offset + w]).to_owned();
            offset += w;
            let mut branch_grads = Vec::with_capacity(branch.layers.len());
            for (i, (layer, t)) in branch.layers.iter().zip(traces).enumerate().rev() {
                let (g, d_in) = layer.backward(t, d_branch.view(), i > 0);
                branch_grads.push(g);
                if let Some(d_in) = d_in {
                    d_branch = d_in;
                }
            }
            branch_grads.reverse();
            grads.extend(branch_grads);
        }
        grads.extend(trunk_grads);
        Ok(GradientSet { layers: grads })
    }

    fn check_trace(&self, trace: &ActivationTrace) -> Result<()> {
        let mismatch = |what: String| Err(Error::Invariant(format!("trace does not match model: {what}")));
        if trace.branches.len() != self.branches.len() {
            return mismatch(format!(
                "{} branches traced, model has {}",
                trace.branches.len(),
                self.branches.len()
            ));
        }
        let pairs = self
            .branches
            .iter()
            .zip(&trace.branches)
            .map(|(b, t)| (b.layers.as_slice(), t.as_slice()))
            .chain(std::iter::once((self.trunk.as_slice(), trace.trunk.as_slice())));
        for (layers, traces) in pairs {
            if layers.len() != traces.len() {
                return mismatch(format!(
                    "{} layers traced, stage has {}",
                    traces.len(),
                    layers.len()
                ));
            }
            for (l, t) in layers.iter().zip(traces) {
                let expect = (trace.batch_size, l.out_dim());
                if t.pre.dim() != expect
                    || t.mask.dim() != expect
                    || t.input.dim() != (trace.batch_size, l.in_dim())
                {
                    return mismatch(format!(
                        "layer {}→{} traced with pre {:?}, input {:?}",
                        l.in_dim(),
                        l.out_dim(),
                        t.pre.dim(),
                        t.input.dim()
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build, NetworkSpec, StageSpec};
    use crate::data::FeatureLayout;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn small_extended() -> Model {
        let spec = NetworkSpec::extended(StageSpec::new(2, 16), StageSpec::new(2, 16), 3);
        build(&spec, 9).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = NetworkSpec::extended(StageSpec::new(2, 16), StageSpec::new(2, 32), 3);
        let mut m = build(&spec, 1).unwrap();
        for l in m.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let (out, _) = m.forward(random_batch(5, 190, 2).view(), Mode::Eval, 0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_rows_independent_of_batch() {
        let m = small_extended();
        let batch = random_batch(7, 190, 3);
        let (full, _) = m.forward(batch.view(), Mode::Eval, 0).unwrap();
        for r in 0..7 {
            let (single, _) = m.forward(batch.slice(s![r..r + 1, ..]), Mode::Eval, 0).unwrap();
            assert_eq!(single.row(0), full.row(r));
        }
        assert_eq!(m.predict(batch.view()).unwrap(), full);
    }

    #[test]
    fn wrong_width_is_shape_error() {
        let m = small_extended();
        let err = m.forward(random_batch(2, 189, 0).view(), Mode::Eval, 0);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn state_vars_do_not_reach_stage1() {
        let m = small_extended();
        let a = random_batch(4, 190, 5);
        let mut b = a.clone();
        b.column_mut(188).mapv_inplace(|v| v + 3.0);
        b.column_mut(189).mapv_inplace(|v| v - 1.0);
        let (out_a, ta) = m.forward(a.view(), Mode::Eval, 0).unwrap();
        let (out_b, tb) = m.forward(b.view(), Mode::Eval, 0).unwrap();
        for (x, y) in ta.branches.iter().flatten().zip(tb.branches.iter().flatten()) {
            assert_eq!(x.post, y.post);
        }
        assert_ne!(out_a, out_b);
    }

    #[test]
    fn cation_and_anion_isolated() {
        let m = small_extended();
        let a = random_batch(4, 190, 6);
        let mut b = a.clone();
        b.column_mut(10).mapv_inplace(|v| v + 1.0);
        let (_, ta) = m.forward(a.view(), Mode::Eval, 0).unwrap();
        let (_, tb) = m.forward(b.view(), Mode::Eval, 0).unwrap();
        for (x, y) in ta.branches[1].iter().zip(&tb.branches[1]) {
            assert_eq!(x.post, y.post);
        }
        assert_ne!(ta.branches[0][0].post, tb.branches[0][0].post);

        let mut c = a.clone();
        c.column_mut(100).mapv_inplace(|v| v + 1.0);
        let (_, tc) = m.forward(c.view(), Mode::Eval, 0).unwrap();
        for (x, y) in ta.branches[0].iter().zip(&tc.branches[0]) {
            assert_eq!(x.post, y.post);
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let m = small_extended();
        let (_, t) = m.forward(random_batch(3, 190, 1).view(), Mode::Train, 4).unwrap();
        let g = m.backward(&t, Array2::zeros((3, 3)).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(g.layers.len(), m.layers().count());
    }

    #[test]
    fn mismatched_trace_is_invariant_error() {
        let m = small_extended();
        let other = build(&NetworkSpec::baseline(StageSpec::new(2, 16), 3), 0).unwrap();
        let (_, t) = other.forward(random_batch(3, 190, 1).view(), Mode::Eval, 0).unwrap();
        let err = m.backward(&t, Array2::zeros((3, 3)).view());
        assert!(matches!(err, Err(Error::Invariant(_))));
    }

    #[test]
    fn train_forward_is_seeded() {
        let m = small_extended();
        let x = random_batch(6, 190, 2);
        let (a, _) = m.forward(x.view(), Mode::Train, 17).unwrap();
        let (b, _) = m.forward(x.view(), Mode::Train, 17).unwrap();
        let (c, _) = m.forward(x.view(), Mode::Train, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // Single hidden relu layer with positive activations; average the
        // rescaled train-mode outputs of that layer over many mask draws.
        let layout = FeatureLayout::new(3, 3, 2);
        let spec = NetworkSpec::simple(StageSpec::new(1, 4), 1)
            .with_layout(layout)
            .off_grid();
        let mut m = build(&spec, 2).unwrap();
        for l in m.layers_mut() {
            l.weights.mapv_inplace(f64::abs);
            l.bias.fill(0.1);
        }
        let x = Array2::from_elem((1, 8), 0.5);
        let (_, eval) = m.forward(x.view(), Mode::Eval, 0).unwrap();
        let reference = &eval.branches[0][0].post;
        let draws = 20_000;
        let mut sum = Array2::<f64>::zeros(reference.raw_dim());
        for seed in 0..draws {
            let (_, t) = m.forward(x.view(), Mode::Train, seed).unwrap();
            sum += &t.branches[0][0].post;
        }
        let mean = sum / draws as f64;
        for (got, want) in mean.iter().zip(reference.iter()) {
            assert!(((got - want) / want).abs() < 0.02, "{got} vs {want}");
        }
    }
}
