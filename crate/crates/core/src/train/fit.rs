use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimizerState};
use super::loss::{multitask_loss, multitask_loss_grad};
use super::TrainConfig;
use crate::data::DescriptorDataset;
use crate::error::{Error, Result};
use crate::eval::rmse;
use crate::model::{Mode, Model};

/// Patience-based stopping on a validation-loss sequence.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the loss for `epoch` (1-based). Returns `true` if this epoch
    /// is the new best.
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Snapshot taken at the best validation epoch.
    pub model: Model,
    /// 1-based.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Eval-mode predictions and per-task RMSE.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Array2<f64>,
    pub rmse: Vec<f64>,
}

pub fn evaluate(model: &Model, dataset: &DescriptorDataset) -> Result<Evaluation> {
    let predictions = model.predict(dataset.features())?;
    let labels = dataset.labels();
    let rmse = (0..dataset.n_tasks())
        .map(|t| rmse(predictions.column(t), labels.column(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation { predictions, rmse })
}

fn check_inputs(model: &Model, data: &DescriptorDataset, what: &str, config: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} set is empty")));
    }
    if data.n_tasks() != model.output_dim() || config.task_weights.n_tasks() != model.output_dim() {
        return Err(Error::Shape(format!(
            "{what} set has {} tasks, model has {} outputs, {} task weights",
            data.n_tasks(),
            model.output_dim(),
            config.task_weights.n_tasks()
        )));
    }
    if data.layout() != model.spec().layout {
        return Err(Error::Shape(format!("{what} set layout does not match the model")));
    }
    Ok(())
}

/// Mini-batch Adam with early stopping on the validation loss. Returns the
/// model from the best epoch. Deterministic given `config.seed`.
pub fn fit(
    mut model: Model,
    train: &DescriptorDataset,
    val: &DescriptorDataset,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    check_inputs(&model, train, "training", config)?;
    check_inputs(&model, val, "validation", config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptimizerState::new(&model);
    let mut stopper = EarlyStopping::new(config.patience, config.min_delta);
    let mut best_model = model.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let x_all = train.features();
    let y_all = train.labels();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let x = x_all.select(Axis(0), rows);
            let y = y_all.select(Axis(0), rows);
            let fail = |message: String| Error::Training {
                epoch,
                batch: b + 1,
                message,
            };
            let (pred, trace) = model.forward(x.view(), Mode::Train, rng.random())?;
            let (loss, d_out) = multitask_loss_grad(pred.view(), y.view(), &config.task_weights)?;
            if !loss.is_finite() {
                return Err(fail(format!("loss is {loss}")));
            }
            let grads = model.backward(&trace, d_out.view())?;
            adam_step(&mut model, &grads, &mut state, config).map_err(|e| fail(e.to_string()))?;
            epoch_loss += loss * rows.len() as f64;
            seen += rows.len();
        }

        let val_pred = model.predict(val.features())?;
        let val_loss = multitask_loss(val_pred.view(), val.labels(), &config.task_weights)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: 0,
                message: format!("validation loss is {val_loss}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / seen as f64,
            val_loss,
        });
        if stopper.update(epoch, val_loss) {
            best_model.clone_from(&model);
        }
        if stopper.should_stop() {
            break;
        }
    }

    let (best_epoch, best_val_loss) = stopper.best();
    let stopped_early = history.len() < config.max_epochs;
    log::debug!(
        "fit finished after {} epochs (best {best_epoch}, val loss {best_val_loss:.6})",
        history.len()
    );
    Ok(FitResult {
        model: best_model,
        best_epoch,
        best_val_loss,
        history,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64], patience: usize) -> (usize, usize, bool) {
        let mut s = EarlyStopping::new(patience, 1e-6);
        let mut epochs = 0;
        for (i, &l) in losses.iter().enumerate() {
            epochs = i + 1;
            s.update(epochs, l);
            if s.should_stop() {
                return (epochs, s.best().0, true);
            }
        }
        (epochs, s.best().0, false)
    }

    #[test]
    fn stops_after_patience_exhausted() {
        assert_eq!(run(&[1.0, 0.9, 0.95, 0.96, 0.97], 2), (4, 2, true));
    }

    #[test]
    fn monotone_improvement_runs_to_the_end() {
        let losses: Vec<f64> = (0..500).map(|i| 1.0 - i as f64 * 1e-3).collect();
        assert_eq!(run(&losses, 499), (500, 500, false));
    }

    #[test]
    fn float_noise_is_not_improvement() {
        assert_eq!(run(&[1.0, 1.0 - 1e-9, 1.0 - 2e-9], 2), (3, 1, true));
    }
}
