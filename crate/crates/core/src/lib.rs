//! Furcated feedforward neural networks for multi-task regression over
//! two-component entities (e.g. a cation/anion pair measured at a given
//! temperature and pressure).
//!
//! The crate covers the whole training protocol: dense layers with exact
//! backpropagation, the baseline / simple-furcated / extended-furcated
//! architectures, descriptor CSV ingestion and scaling, Adam with early
//! stopping and k-fold cross-validation, hyperparameter grid search, and
//! RMSE reporting.

pub mod arch;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod model_io;
pub mod nn;
pub mod search;
pub mod train;

pub use arch::{build, param_count, ArchClass, NetworkSpec, StageSpec};
pub use data::{DescriptorDataset, FeatureLayout, LabelTransform, ScalerState, SplitPlan};
pub use error::{Error, FormatError, Result};
pub use model::{ActivationTrace, Model, Mode};
pub use nn::{Activation, DenseLayer, GradientSet};
pub use train::{CvResult, FitResult, TaskWeights, TrainConfig};
