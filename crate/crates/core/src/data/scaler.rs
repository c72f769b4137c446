use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::DescriptorDataset;
use crate::error::{Error, Result};

/// Per-column mean and population standard deviation, fitted on training
/// rows only. Constant columns map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant_columns: Vec<usize>,
    pub fitted_rows: usize,
}

impl ScalerState {
    pub fn fit(features: ArrayView2<f64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset("cannot fit a scaler on zero rows".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let std = features.std_axis(Axis(0), 0.0).to_vec();
        let constant_columns = std
            .iter()
            .zip(&mean)
            .enumerate()
            .filter(|(_, (s, m))| **s <= 1e-12 * m.abs().max(1.0))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            mean,
            std,
            constant_columns,
            fitted_rows: n,
        })
    }

    pub fn n_columns(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, features: &ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.n_columns() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} columns applied to {}",
                self.n_columns(),
                features.ncols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&features)?;
        let mut out = features.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.constant_columns.binary_search(&j).is_ok() {
                col.fill(0.0);
            } else {
                let (m, s) = (self.mean[j], self.std[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }

    /// Inverse of [`apply`](Self::apply); constant columns come back as
    /// their fitted mean.
    pub fn invert(&self, scaled: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&scaled)?;
        let mut out = scaled.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            if self.constant_columns.binary_search(&j).is_ok() {
                col.fill(m);
            } else {
                col.mapv_inplace(|v| v * s + m);
            }
        }
        Ok(out)
    }
}

/// Fits a scaler on `dataset` when none is given, then applies it.
pub fn standardize(
    dataset: &DescriptorDataset,
    scaler: Option<&ScalerState>,
) -> Result<(DescriptorDataset, ScalerState)> {
    if dataset.is_standardized() {
        return Err(Error::Invariant("features are already standardized".into()));
    }
    let scaler = match scaler {
        Some(s) => s.clone(),
        None => ScalerState::fit(dataset.features())?,
    };
    let scaled = scaler.apply(dataset.features())?;
    Ok((dataset.with_features(scaled, true), scaler))
}

pub fn unstandardize(dataset: &DescriptorDataset, scaler: &ScalerState) -> Result<DescriptorDataset> {
    if !dataset.is_standardized() {
        return Err(Error::Invariant("features are not standardized".into()));
    }
    let raw = scaler.invert(dataset.features())?;
    Ok(dataset.with_features(raw, false))
}

/// Fits on `fit_rows` and applies the same scaler to each of `apply_to`.
/// Fails if any applied row set overlaps the fitting rows.
pub fn standardize_partition(
    dataset: &DescriptorDataset,
    fit_rows: &[usize],
    apply_to: &[&[usize]],
) -> Result<(ScalerState, DescriptorDataset, Vec<DescriptorDataset>)> {
    let mut in_fit = vec![false; dataset.len()];
    for &r in fit_rows {
        *in_fit.get_mut(r).ok_or_else(|| Error::Data(format!("row {r} out of range")))? = true;
    }
    for rows in apply_to {
        if let Some(&r) = rows.iter().find(|&&r| in_fit.get(r).copied().unwrap_or(false)) {
            return Err(Error::Invariant(format!(
                "row {r} is both in the scaler's fitting rows and an evaluation set"
            )));
        }
    }
    let (fitted, scaler) = standardize(&dataset.select(fit_rows), None)?;
    let applied = apply_to
        .iter()
        .map(|rows| standardize(&dataset.select(rows), Some(&scaler)).map(|(d, _)| d))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaler, fitted, applied))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureLayout;
    use ndarray::{array, Array2};

    fn dataset(features: Array2<f64>) -> DescriptorDataset {
        let n = features.nrows();
        DescriptorDataset::new(FeatureLayout::new(1, 1, 1), features, Array2::ones((n, 1)), vec!["y".into()])
            .unwrap()
    }

    #[test]
    fn hand_computed_columns() {
        let d = dataset(array![[1.0, -1.0, 5.0], [2.0, 1.0, 5.0], [3.0, -1.0, 5.0]]);
        let (s, scaler) = standardize(&d, None).unwrap();
        let f = s.features();
        let r = 1.224744871391589;
        for (got, want) in f.column(0).iter().zip([-r, 0.0, r]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(scaler.constant_columns, vec![2]);
        assert!(f.column(2).iter().all(|&v| v == 0.0));
        assert!((scaler.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn already_standard_column_unchanged() {
        let d = dataset(array![[-1.0, 0.0, 0.0], [1.0, 0.0, 1.0]]);
        let (s, _) = standardize(&d, None).unwrap();
        assert_eq!(s.features().column(0).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn mismatched_scaler_is_shape_error() {
        let d = dataset(array![[1.0, 2.0, 3.0]]);
        let scaler = ScalerState::fit(array![[1.0, 2.0]].view()).unwrap();
        assert!(matches!(standardize(&d, Some(&scaler)), Err(Error::Shape(_))));
    }

    #[test]
    fn partition_rejects_overlap() {
        let d = dataset(Array2::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64));
        let err = standardize_partition(&d, &[0, 1, 2, 3], &[&[4, 5], &[3]]);
        assert!(matches!(err, Err(Error::Invariant(_))));
        let (scaler, fitted, applied) = standardize_partition(&d, &[0, 1, 2, 3], &[&[4, 5]]).unwrap();
        assert_eq!(scaler.fitted_rows, 4);
        assert_eq!(fitted.len(), 4);
        assert_eq!(applied[0].len(), 2);
    }

    #[test]
    fn double_standardize_rejected() {
        let d = dataset(array![[1.0, 2.0, 3.0], [2.0, 2.0, 1.0]]);
        let (s, _) = standardize(&d, None).unwrap();
        assert!(matches!(standardize(&s, None), Err(Error::Invariant(_))));
    }
}
