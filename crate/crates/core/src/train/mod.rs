//! Losses, Adam, the early-stopped epoch loop and k-fold cross-validation.

mod adam;
mod cv;
mod fit;
pub mod loss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, adam_update, OptimizerState};
pub use cv::{cross_validate, fold_seed, CvResult, CvSummary, FoldResult};
pub use fit::{evaluate, fit, EarlyStopping, EpochRecord, Evaluation, FitResult};
pub use loss::{mse, multitask_loss, multitask_loss_grad, per_task_mse};

/// Default multi-task weights for heat capacity, density and viscosity.
pub const DEFAULT_MULTITASK_WEIGHTS: [f64; 3] = [5.0, 30.0, 1.0];
pub const DEFAULT_OVERWEIGHT_FACTOR: f64 = 100.0;

/// Per-task loss weights with an optional overweighted task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    pub weights: Vec<f64>,
    /// `(task, factor)`: that task's weight is multiplied by `factor`.
    pub overweight: Option<(usize, f64)>,
}

impl TaskWeights {
    pub fn new(weights: Vec<f64>) -> Self {
        Self {
            weights,
            overweight: None,
        }
    }

    /// `[1]` for one task, `5:30:1` for three, uniform otherwise.
    pub fn default_for(n_tasks: usize) -> Self {
        match n_tasks {
            3 => Self::new(DEFAULT_MULTITASK_WEIGHTS.to_vec()),
            n => Self::new(vec![1.0; n]),
        }
    }

    pub fn with_overweight(mut self, task: usize, factor: f64) -> Self {
        self.overweight = Some((task, factor));
        self
    }

    pub fn n_tasks(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("no task weights".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("task weights must be positive, got {w}")));
        }
        if let Some((task, factor)) = self.overweight {
            if task >= self.weights.len() {
                return Err(Error::Config(format!(
                    "overweight task {task} out of range for {} tasks",
                    self.weights.len()
                )));
            }
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::Config(format!("overweight factor must be positive, got {factor}")));
            }
        }
        Ok(())
    }

    /// Weights after applying the overweight factor.
    pub fn effective(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut w = self.weights.clone();
        if let Some((task, factor)) = self.overweight {
            w[task] *= factor;
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Minimum absolute decrease in validation loss that counts as an
    /// improvement.
    pub min_delta: f64,
    pub task_weights: TaskWeights,
    pub seed: u64,
    /// Folds trained concurrently; results do not depend on it.
    pub jobs: usize,
}

impl TrainConfig {
    pub fn for_tasks(n_tasks: usize, seed: u64) -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 500,
            batch_size: 30,
            patience: 50,
            min_delta: 1e-6,
            task_weights: TaskWeights::default_for(n_tasks),
            seed,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task_weights.validate()?;
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
        {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }
}
