//! Weighted multi-task mean squared error: `Σ_t w_t · MSE_t`, with no
//! normalization by `Σ w`.

use ndarray::{Array2, ArrayView2};

use super::TaskWeights;
use crate::error::{Error, Result};

fn check_shapes(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

/// Mean over the batch of the squared error in column `task`.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>, task: usize) -> Result<f64> {
    check_shapes(&pred, &target)?;
    if task >= pred.ncols() {
        return Err(Error::Shape(format!("task {task} out of range for {} columns", pred.ncols())));
    }
    let n = pred.nrows() as f64;
    Ok(pred
        .column(task)
        .iter()
        .zip(target.column(task))
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n)
}

pub fn per_task_mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Vec<f64>> {
    (0..pred.ncols()).map(|t| mse(pred, target, t)).collect()
}

fn effective_weights(weights: &TaskWeights, n_tasks: usize) -> Result<Vec<f64>> {
    if weights.n_tasks() != n_tasks {
        return Err(Error::Shape(format!(
            "{} task weights for {n_tasks} prediction columns",
            weights.n_tasks()
        )));
    }
    weights.effective()
}

pub fn multitask_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>, weights: &TaskWeights) -> Result<f64> {
    let w = effective_weights(weights, pred.ncols())?;
    let mses = per_task_mse(pred, target)?;
    Ok(w.iter().zip(&mses).map(|(w, m)| w * m).sum())
}

/// Loss and its gradient with respect to the predictions:
/// `dL/dp[i,t] = 2·w_t·(p[i,t] − y[i,t]) / B`.
pub fn multitask_loss_grad(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weights: &TaskWeights,
) -> Result<(f64, Array2<f64>)> {
    let w = effective_weights(weights, pred.ncols())?;
    check_shapes(&pred, &target)?;
    let n = pred.nrows() as f64;
    let mut grad = &pred - &target;
    let mut loss = 0.0;
    for (t, mut col) in grad.columns_mut().into_iter().enumerate() {
        loss += w[t] * (col.iter().map(|d| d * d).sum::<f64>() / n);
        let scale = 2.0 * w[t] / n;
        col.mapv_inplace(|d| d * scale);
    }
    Ok((loss, grad))
}
