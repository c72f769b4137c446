//! Declarative network specs and the three architecture classes.
//!
//! * `Baseline`: every input column feeds one MLP.
//! * `SimpleFurcated`: cation and anion columns each feed their own stage-1
//!   sub-network; their outputs are concatenated with the state variables
//!   and combined by a single affine output layer.
//! * `ExtendedFurcated`: as above, but the concatenation feeds a stage-2 MLP
//!   before the output layer.
//!
//! State variables never enter a stage-1 sub-network.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureLayout;
use crate::error::{Error, Result};
use crate::model::{Branch, Model};
use crate::nn::{Activation, DenseLayer};

pub const DEPTH_CHOICES: [usize; 4] = [2, 3, 4, 5];
pub const WIDTH_CHOICES: [usize; 6] = [16, 32, 64, 128, 256, 512];
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchClass {
    Baseline,
    SimpleFurcated,
    ExtendedFurcated,
}

impl ArchClass {
    pub const ALL: [ArchClass; 3] = [
        ArchClass::Baseline,
        ArchClass::SimpleFurcated,
        ArchClass::ExtendedFurcated,
    ];

    /// Token used in model files.
    pub fn token(self) -> &'static str {
        match self {
            ArchClass::Baseline => "baseline",
            ArchClass::SimpleFurcated => "simple_furcated",
            ArchClass::ExtendedFurcated => "extended_furcated",
        }
    }

    /// Short name used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ArchClass::Baseline => "Baseline",
            ArchClass::SimpleFurcated => "Simple",
            ArchClass::ExtendedFurcated => "Extended",
        }
    }

    pub fn is_furcated(self) -> bool {
        !matches!(self, ArchClass::Baseline)
    }
}

impl fmt::Display for ArchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ArchClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(ArchClass::Baseline),
            "simple" | "simple_furcated" | "simple-furcated" => Ok(ArchClass::SimpleFurcated),
            "extended" | "extended_furcated" | "extended-furcated" => {
                Ok(ArchClass::ExtendedFurcated)
            }
            _ => Err(Error::InvalidSpec(format!("unknown architecture class {s:?}"))),
        }
    }
}

/// Depth and width of one stage, written `d(w)`: `3(128)` is three layers of
/// 128 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StageSpec {
    pub depth: usize,
    pub width: usize,
}

impl StageSpec {
    pub const fn new(depth: usize, width: usize) -> Self {
        Self { depth, width }
    }

    pub fn on_grid(&self) -> bool {
        DEPTH_CHOICES.contains(&self.depth) && WIDTH_CHOICES.contains(&self.width)
    }
}

impl fmt::Display for StageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.depth, self.width)
    }
}

impl FromStr for StageSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidSpec(format!("expected stage written as d(w), got {s:?}"));
        let s = s.trim();
        let (depth, rest) = s.split_once('(').ok_or_else(bad)?;
        let width = rest.strip_suffix(')').ok_or_else(bad)?;
        let depth = depth.trim().parse().map_err(|_| bad())?;
        let width = width.trim().parse().map_err(|_| bad())?;
        Ok(StageSpec { depth, width })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: ArchClass,
    /// For the baseline this is the single MLP; for furcated classes it is
    /// shared by the cation and anion sub-networks (weights are separate).
    pub stage1: StageSpec,
    /// Present iff `arch` is `ExtendedFurcated`.
    pub stage2: Option<StageSpec>,
    pub layout: FeatureLayout,
    pub n_tasks: usize,
    /// Dropout applied after every hidden layer's activation.
    pub dropout: f64,
    /// Skip grid-membership checks (depth/width/task count).
    pub off_grid: bool,
}

impl NetworkSpec {
    pub fn baseline(stage1: StageSpec, n_tasks: usize) -> Self {
        Self::new(ArchClass::Baseline, stage1, None, n_tasks)
    }

    pub fn simple(stage1: StageSpec, n_tasks: usize) -> Self {
        Self::new(ArchClass::SimpleFurcated, stage1, None, n_tasks)
    }

    pub fn extended(stage1: StageSpec, stage2: StageSpec, n_tasks: usize) -> Self {
        Self::new(ArchClass::ExtendedFurcated, stage1, Some(stage2), n_tasks)
    }

    pub fn new(
        arch: ArchClass,
        stage1: StageSpec,
        stage2: Option<StageSpec>,
        n_tasks: usize,
    ) -> Self {
        Self {
            arch,
            stage1,
            stage2,
            layout: FeatureLayout::default(),
            n_tasks,
            dropout: DEFAULT_DROPOUT,
            off_grid: false,
        }
    }

    pub fn with_layout(mut self, layout: FeatureLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn off_grid(mut self) -> Self {
        self.off_grid = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let stages = std::iter::once(("stage-1", self.stage1)).chain(self.stage2.map(|s| ("stage-2", s)));
        for (name, stage) in stages {
            if stage.depth == 0 || stage.width == 0 {
                return Err(Error::InvalidSpec(format!(
                    "{name} {stage} has a zero depth or width"
                )));
            }
            if !self.off_grid && !stage.on_grid() {
                return Err(Error::InvalidSpec(format!(
                    "{name} {stage} is off the search grid (depths {DEPTH_CHOICES:?}, widths {WIDTH_CHOICES:?})"
                )));
            }
        }
        match (self.arch, self.stage2) {
            (ArchClass::ExtendedFurcated, None) => {
                return Err(Error::InvalidSpec(
                    "extended_furcated requires a stage-2 spec".into(),
                ))
            }
            (ArchClass::Baseline | ArchClass::SimpleFurcated, Some(_)) => {
                return Err(Error::InvalidSpec(format!(
                    "{} takes no stage-2 spec",
                    self.arch
                )))
            }
            _ => {}
        }
        if self.n_tasks == 0 {
            return Err(Error::InvalidSpec("n_tasks must be positive".into()));
        }
        if !self.off_grid && !matches!(self.n_tasks, 1 | 3) {
            return Err(Error::InvalidSpec(format!(
                "n_tasks must be 1 or 3, got {}",
                self.n_tasks
            )));
        }
        let l = &self.layout;
        if l.n_cation == 0 || l.n_anion == 0 {
            return Err(Error::InvalidSpec("component feature counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidSpec(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Describes which input columns feed which sub-network.
    pub fn connectivity(&self) -> ConnectivityGraph {
        let l = &self.layout;
        match self.arch {
            ArchClass::Baseline => ConnectivityGraph {
                branches: vec![],
                passthrough: 0..l.width(),
                trunk_input_width: l.width(),
                trunk_hidden: Some(self.stage1),
                n_outputs: self.n_tasks,
            },
            ArchClass::SimpleFurcated | ArchClass::ExtendedFurcated => ConnectivityGraph {
                branches: vec![
                    ("cation".to_string(), l.cation_range()),
                    ("anion".to_string(), l.anion_range()),
                ],
                passthrough: l.state_range(),
                trunk_input_width: 2 * self.stage1.width + l.n_state,
                trunk_hidden: self.stage2,
                n_outputs: self.n_tasks,
            },
        }
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.arch.display_name(), self.stage1)?;
        if let Some(s2) = self.stage2 {
            write!(f, " / {s2}")?;
        }
        Ok(())
    }
}

/// Input slices, sub-networks and the merge point of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityGraph {
    /// Stage-1 sub-networks and the input columns each one reads.
    pub branches: Vec<(String, Range<usize>)>,
    /// Columns routed straight to the merge point (the state-variable rail,
    /// or every column for the baseline).
    pub passthrough: Range<usize>,
    pub trunk_input_width: usize,
    pub trunk_hidden: Option<StageSpec>,
    pub n_outputs: usize,
}

/// Builds a model with Glorot-uniform weights and zero biases.
pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_with(spec, |in_dim, out_dim, act, dropout| {
        DenseLayer::glorot(in_dim, out_dim, act, dropout, &mut rng)
    })
}

/// Builds the layer structure of `spec`, creating each layer with `make` in
/// canonical order (cation, anion, trunk).
pub(crate) fn build_with<F>(spec: &NetworkSpec, mut make: F) -> Result<Model>
where
    F: FnMut(usize, usize, Activation, f64) -> DenseLayer,
{
    spec.validate()?;
    let graph = spec.connectivity();
    let mut mlp = |in_dim: usize, stage: StageSpec| -> Vec<DenseLayer> {
        (0..stage.depth)
            .map(|i| {
                let fan_in = if i == 0 { in_dim } else { stage.width };
                make(fan_in, stage.width, Activation::Relu, spec.dropout)
            })
            .collect()
    };

    let branches: Vec<Branch> = graph
        .branches
        .iter()
        .map(|(name, cols)| Branch {
            name: name.clone(),
            input: cols.clone(),
            layers: mlp(cols.len(), spec.stage1),
        })
        .collect();

    let mut trunk = match graph.trunk_hidden {
        Some(stage) => mlp(graph.trunk_input_width, stage),
        None => Vec::new(),
    };
    let head_in = trunk.last().map_or(graph.trunk_input_width, |l| l.out_dim());
    trunk.push(make(head_in, spec.n_tasks, Activation::Identity, 0.0));

    Model::from_parts(spec.clone(), branches, graph.passthrough, trunk)
}

/// Σ over layers of `in·out + out`.
pub fn param_count(model: &Model) -> usize {
    model.layers().map(DenseLayer::param_count).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn formula(layers: &[(usize, usize)]) -> usize {
        layers.iter().map(|&(i, o)| i * o + o).sum()
    }

    #[test]
    fn stage_string_round_trip() {
        let s: StageSpec = "3(128)".parse().unwrap();
        assert_eq!(s, StageSpec::new(3, 128));
        assert_eq!(s.to_string(), "3(128)");
        assert!("3x128".parse::<StageSpec>().is_err());
        assert!("(128)".parse::<StageSpec>().is_err());
    }

    #[test]
    fn baseline_layer_widths() {
        let m = build(&NetworkSpec::baseline(StageSpec::new(2, 64), 1), 0).unwrap();
        let dims: Vec<_> = m.layers().map(|l| (l.in_dim(), l.out_dim())).collect();
        assert_eq!(dims, vec![(190, 64), (64, 64), (64, 1)]);
    }

    #[test]
    fn extended_param_count_matches_formula() {
        let spec = NetworkSpec::extended(StageSpec::new(2, 64), StageSpec::new(2, 128), 1);
        let m = build(&spec, 0).unwrap();
        assert_eq!(spec.connectivity().trunk_input_width, 130);
        let expected = 2 * formula(&[(94, 64), (64, 64)]) + formula(&[(130, 128), (128, 128), (128, 1)]);
        assert_eq!(expected, 53_889);
        assert_eq!(param_count(&m), expected);
    }

    #[test]
    fn simple_three_task_param_count() {
        let m = build(&NetworkSpec::simple(StageSpec::new(2, 64), 3), 0).unwrap();
        assert_eq!(param_count(&m), 20_873);
        let head = m.layers().last().unwrap();
        assert_eq!((head.in_dim(), head.out_dim()), (130, 3));
        assert_eq!(head.activation, Activation::Identity);
        assert_eq!(head.dropout_rate, 0.0);
    }

    #[test]
    fn hidden_layers_use_relu_and_dropout() {
        let spec = NetworkSpec::extended(StageSpec::new(3, 16), StageSpec::new(2, 32), 3);
        let m = build(&spec, 5).unwrap();
        let n = m.layers().count();
        for (i, l) in m.layers().enumerate() {
            if i + 1 < n {
                assert_eq!(l.activation, Activation::Relu);
                assert_eq!(l.dropout_rate, 0.5);
            }
        }
    }

    #[test]
    fn stage2_rules_enforced() {
        let mut spec = NetworkSpec::baseline(StageSpec::new(2, 64), 1);
        spec.stage2 = Some(StageSpec::new(2, 64));
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let mut spec = NetworkSpec::extended(StageSpec::new(2, 64), StageSpec::new(2, 64), 1);
        spec.stage2 = None;
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn off_grid_requires_flag() {
        let spec = NetworkSpec::baseline(StageSpec::new(1, 7), 1);
        assert!(build(&spec, 0).is_err());
        assert!(build(&spec.clone().off_grid(), 0).is_ok());
        let zero = NetworkSpec::baseline(StageSpec::new(2, 0), 1).off_grid();
        assert!(matches!(build(&zero, 0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn build_is_deterministic_with_zero_biases() {
        let spec = NetworkSpec::extended(StageSpec::new(2, 16), StageSpec::new(2, 32), 3);
        let a = build(&spec, 11).unwrap();
        let b = build(&spec, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.layers().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let c = build(&spec, 12).unwrap();
        assert_ne!(a, c);
    }
}
