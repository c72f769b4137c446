use serde::Serialize;

use super::fit::{evaluate, fit, FitResult};
use super::loss::multitask_loss;
use super::TrainConfig;
use crate::arch::{build, NetworkSpec};
use crate::data::{standardize_partition, DescriptorDataset, ScalerState, SplitPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub fit: FitResult,
    pub scaler: ScalerState,
    pub val_rmse: Vec<f64>,
    pub test_rmse: Vec<f64>,
    /// Weighted multi-task loss on the validation fold.
    pub val_loss: f64,
}

/// Fold results plus fold-mean aggregates.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub val_rmse: Vec<f64>,
    pub test_rmse: Vec<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvSummary {
    pub val_rmse: Vec<f64>,
    pub test_rmse: Vec<f64>,
    pub val_loss: f64,
    pub best_epochs: Vec<usize>,
}

impl CvResult {
    pub fn summary(&self) -> CvSummary {
        CvSummary {
            val_rmse: self.val_rmse.clone(),
            test_rmse: self.test_rmse.clone(),
            val_loss: self.val_loss,
            best_epochs: self.folds.iter().map(|f| f.fit.best_epoch).collect(),
        }
    }

    /// The fold whose model reached the lowest validation loss.
    pub fn best_fold(&self) -> &FoldResult {
        self.folds
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .expect("at least one fold")
    }
}

/// SplitMix64 step; decorrelates per-fold seeds from the base seed.
pub fn fold_seed(base: u64, fold: usize) -> u64 {
    let mut z = base.wrapping_add((fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_fold(
    spec: &NetworkSpec,
    dataset: &DescriptorDataset,
    split: &SplitPlan,
    config: &TrainConfig,
    k: usize,
) -> Result<FoldResult> {
    let train_rows = split.train_rows(k);
    let (scaler, train, mut held) =
        standardize_partition(dataset, &train_rows, &[&split.folds[k], &split.test])?;
    let test = held.pop().expect("test set");
    let val = held.pop().expect("val fold");

    let seed = fold_seed(config.seed, k);
    let model = build(spec, seed)?;
    let fold_config = TrainConfig {
        seed,
        ..config.clone()
    };
    let fit = fit(model, &train, &val, &fold_config).map_err(|e| match e {
        Error::Training { epoch, batch, message } => Error::Training {
            epoch,
            batch,
            message: format!("fold {}: {message}", k + 1),
        },
        e => e,
    })?;
    let val_eval = evaluate(&fit.model, &val)?;
    let test_eval = evaluate(&fit.model, &test)?;
    let val_loss = multitask_loss(val_eval.predictions.view(), val.labels(), &config.task_weights)?;
    log::info!(
        "fold {}: best epoch {}, val RMSE {:?}, test RMSE {:?}",
        k + 1,
        fit.best_epoch,
        val_eval.rmse,
        test_eval.rmse
    );
    Ok(FoldResult {
        fold: k,
        seed,
        fit,
        scaler,
        val_rmse: val_eval.rmse,
        test_rmse: test_eval.rmse,
        val_loss,
    })
}

fn run_folds(
    spec: &NetworkSpec,
    dataset: &DescriptorDataset,
    split: &SplitPlan,
    config: &TrainConfig,
) -> Result<Vec<FoldResult>> {
    let n = split.folds.len();
    #[cfg(feature = "parallel")]
    if config.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        return pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|k| run_fold(spec, dataset, split, config, k))
                .collect()
        });
    }
    (0..n).map(|k| run_fold(spec, dataset, split, config, k)).collect()
}

/// Trains one model per fold (scaler refit on each fold's training rows),
/// validates on the held-out fold and scores every fold model on the
/// shared test set. Aggregates are plain means over folds.
pub fn cross_validate(
    spec: &NetworkSpec,
    dataset: &DescriptorDataset,
    split: &SplitPlan,
    config: &TrainConfig,
) -> Result<CvResult> {
    if split.n_rows != dataset.len() {
        return Err(Error::Split(format!(
            "split built for {} rows, dataset has {}",
            split.n_rows,
            dataset.len()
        )));
    }
    if dataset.is_standardized() {
        return Err(Error::Invariant(
            "cross_validate expects raw features; scaling is fitted per fold".into(),
        ));
    }
    if spec.n_tasks != dataset.n_tasks() {
        return Err(Error::Shape(format!(
            "spec has {} tasks, dataset has {}",
            spec.n_tasks,
            dataset.n_tasks()
        )));
    }
    config.validate()?;

    let folds = run_folds(spec, dataset, split, config)?;
    let k = folds.len() as f64;
    let n_tasks = dataset.n_tasks();
    let mean_of = |pick: &dyn Fn(&FoldResult) -> f64| folds.iter().map(pick).sum::<f64>() / k;
    let val_rmse = (0..n_tasks).map(|t| mean_of(&|f| f.val_rmse[t])).collect();
    let test_rmse = (0..n_tasks).map(|t| mean_of(&|f| f.test_rmse[t])).collect();
    let val_loss = mean_of(&|f| f.val_loss);
    Ok(CvResult {
        folds,
        val_rmse,
        test_rmse,
        val_loss,
    })
}
