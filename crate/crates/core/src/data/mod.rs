//! Descriptor datasets: layout, label transforms, CSV ingestion, feature
//! scaling, splits and a synthetic generator.

mod csv_io;
mod scaler;
mod split;
mod synth;

use std::fmt;
use std::ops::Range;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{
    load_csv, load_csv_with_labels, read_csv, write_csv, LabelColumns, LoadReport, RangeWarning,
    LABEL_BOUNDS,
};
pub use scaler::{standardize, standardize_partition, unstandardize, ScalerState};
pub use split::{make_split, SplitPlan, N_FOLDS};
pub use synth::{clean_labels, synth_generate, SynthCoefficients, SynthConfig};

/// Column names of the three properties, in canonical order.
pub const PROPERTY_NAMES: [&str; 3] = ["cpt", "density", "viscosity"];
pub const TEMPERATURE_COLUMN: &str = "temperature_K";
pub const PRESSURE_COLUMN: &str = "pressure_kPa";

/// Column layout of the model input: cation block, anion block, state
/// variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_cation: usize,
    pub n_anion: usize,
    pub n_state: usize,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self {
            n_cation: 94,
            n_anion: 94,
            n_state: 2,
        }
    }
}

impl FeatureLayout {
    pub const fn new(n_cation: usize, n_anion: usize, n_state: usize) -> Self {
        Self {
            n_cation,
            n_anion,
            n_state,
        }
    }

    pub fn width(&self) -> usize {
        self.n_cation + self.n_anion + self.n_state
    }

    pub fn cation_range(&self) -> Range<usize> {
        0..self.n_cation
    }

    pub fn anion_range(&self) -> Range<usize> {
        self.n_cation..self.n_cation + self.n_anion
    }

    pub fn state_range(&self) -> Range<usize> {
        self.n_cation + self.n_anion..self.width()
    }

    /// `c_000.., a_000.., temperature_K, pressure_kPa`; extra state
    /// variables beyond two are named `state_2..`.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_cation).map(|i| format!("c_{i:03}")).collect();
        names.extend((0..self.n_anion).map(|i| format!("a_{i:03}")));
        names.extend((0..self.n_state).map(|i| match i {
            0 => TEMPERATURE_COLUMN.to_string(),
            1 => PRESSURE_COLUMN.to_string(),
            _ => format!("state_{i}"),
        }));
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelTransform {
    Raw,
    NaturalLog,
}

impl fmt::Display for LabelTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelTransform::Raw => "raw label space",
            LabelTransform::NaturalLog => "natural-log label space",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorDataset {
    layout: FeatureLayout,
    /// `N × layout.width()`
    features: Array2<f64>,
    /// `N × T`
    labels: Array2<f64>,
    label_names: Vec<String>,
    label_transform: LabelTransform,
    standardized: bool,
}

impl DescriptorDataset {
    pub fn new(
        layout: FeatureLayout,
        features: Array2<f64>,
        labels: Array2<f64>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if features.ncols() != layout.width() {
            return Err(Error::Shape(format!(
                "feature matrix has {} columns, layout needs {}",
                features.ncols(),
                layout.width()
            )));
        }
        if features.nrows() != labels.nrows() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} label rows",
                features.nrows(),
                labels.nrows()
            )));
        }
        if labels.ncols() != label_names.len() {
            return Err(Error::Shape(format!(
                "{} label columns but {} names",
                labels.ncols(),
                label_names.len()
            )));
        }
        if labels.ncols() == 0 {
            return Err(Error::Data("dataset has no label columns".into()));
        }
        if let Some(pos) = features.iter().chain(labels.iter()).position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at flat position {pos}")));
        }
        Ok(Self {
            layout,
            features,
            labels,
            label_names,
            label_transform: LabelTransform::Raw,
            standardized: false,
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> ArrayView2<'_, f64> {
        self.labels.view()
    }

    pub fn cation_features(&self) -> ArrayView2<'_, f64> {
        self.features.slice(s![.., self.layout.cation_range()])
    }

    pub fn anion_features(&self) -> ArrayView2<'_, f64> {
        self.features.slice(s![.., self.layout.anion_range()])
    }

    pub fn state_vars(&self) -> ArrayView2<'_, f64> {
        self.features.slice(s![.., self.layout.state_range()])
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_transform(&self) -> LabelTransform {
        self.label_transform
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Rows `rows` in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            layout: self.layout,
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            label_names: self.label_names.clone(),
            label_transform: self.label_transform,
            standardized: self.standardized,
        }
    }

    /// Keeps only the listed label columns.
    pub fn select_tasks(&self, tasks: &[usize]) -> Result<Self> {
        if let Some(&t) = tasks.iter().find(|&&t| t >= self.n_tasks()) {
            return Err(Error::Data(format!(
                "task index {t} out of range for {} tasks",
                self.n_tasks()
            )));
        }
        Ok(Self {
            labels: self.labels.select(Axis(1), tasks),
            label_names: tasks.iter().map(|&t| self.label_names[t].clone()).collect(),
            ..self.clone()
        })
    }

    pub(crate) fn with_features(&self, features: Array2<f64>, standardized: bool) -> Self {
        Self {
            features,
            standardized,
            ..self.clone()
        }
    }

    pub(crate) fn with_labels(&self, labels: Array2<f64>, transform: LabelTransform) -> Self {
        Self {
            labels,
            label_transform: transform,
            ..self.clone()
        }
    }
}

/// Natural log of every label. Labels must be strictly positive.
pub fn log_labels(dataset: &DescriptorDataset) -> Result<DescriptorDataset> {
    if dataset.label_transform == LabelTransform::NaturalLog {
        return Err(Error::Invariant("labels are already log-transformed".into()));
    }
    for ((row, task), &v) in dataset.labels.indexed_iter() {
        if v <= 0.0 {
            return Err(Error::Data(format!(
                "label {} in row {row} is {v}; log transform needs positive values",
                dataset.label_names[task]
            )));
        }
    }
    Ok(dataset.with_labels(dataset.labels.mapv(f64::ln), LabelTransform::NaturalLog))
}

/// Inverse of [`log_labels`].
pub fn exp_labels(dataset: &DescriptorDataset) -> Result<DescriptorDataset> {
    if dataset.label_transform != LabelTransform::NaturalLog {
        return Err(Error::Invariant("labels are not log-transformed".into()));
    }
    Ok(dataset.with_labels(dataset.labels.mapv(f64::exp), LabelTransform::Raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(labels: Array2<f64>) -> DescriptorDataset {
        let layout = FeatureLayout::new(1, 1, 1);
        let n = labels.nrows();
        DescriptorDataset::new(
            layout,
            Array2::zeros((n, 3)),
            labels.clone(),
            (0..labels.ncols()).map(|t| format!("y{t}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_layout_names() {
        let names = FeatureLayout::default().column_names();
        assert_eq!(names.len(), 190);
        assert_eq!(names[0], "c_000");
        assert_eq!(names[93], "c_093");
        assert_eq!(names[94], "a_000");
        assert_eq!(names[188], "temperature_K");
        assert_eq!(names[189], "pressure_kPa");
    }

    #[test]
    fn log_of_known_values() {
        let d = tiny(array![[1.0], [std::f64::consts::E], [0.00316]]);
        let l = log_labels(&d).unwrap();
        assert_eq!(l.labels()[[0, 0]], 0.0);
        assert!((l.labels()[[1, 0]] - 1.0).abs() < 1e-15);
        assert!((l.labels()[[2, 0]] - (-5.757)).abs() < 5e-4);
        assert_eq!(l.label_transform(), LabelTransform::NaturalLog);
    }

    #[test]
    fn non_positive_label_names_row_and_task() {
        let d = tiny(array![[1.0, 2.0], [3.0, 0.0]]);
        let err = log_labels(&d).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("y1"), "{err}");
    }

    #[test]
    fn rejects_non_finite_and_mismatched_blocks() {
        let layout = FeatureLayout::new(1, 1, 1);
        let bad = DescriptorDataset::new(layout, array![[0.0, f64::NAN, 0.0]], array![[1.0]], vec!["y".into()]);
        assert!(matches!(bad, Err(Error::Data(_))));
        let bad = DescriptorDataset::new(layout, Array2::zeros((2, 3)), array![[1.0]], vec!["y".into()]);
        assert!(matches!(bad, Err(Error::Shape(_))));
    }
}
