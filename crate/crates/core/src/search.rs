//! Exhaustive hyperparameter grid search over depth/width choices.

use serde::{Deserialize, Serialize};

use crate::arch::{build, param_count, ArchClass, NetworkSpec, StageSpec, DEPTH_CHOICES, WIDTH_CHOICES};
use crate::data::{DescriptorDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::train::{cross_validate, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Rank by one task's validation RMSE.
    PerTask(usize),
    /// Rank by the reweighted multi-task validation loss.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub arch: ArchClass,
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub mode: SearchMode,
    pub n_tasks: usize,
    pub dropout: f64,
    pub off_grid: bool,
}

impl GridSpec {
    pub fn new(arch: ArchClass, n_tasks: usize, mode: SearchMode) -> Self {
        Self {
            arch,
            depths: DEPTH_CHOICES.to_vec(),
            widths: WIDTH_CHOICES.to_vec(),
            mode,
            n_tasks,
            dropout: crate::arch::DEFAULT_DROPOUT,
            off_grid: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.widths.is_empty() {
            return Err(Error::Config("grid has no depth or width choices".into()));
        }
        if !self.off_grid {
            if let Some(d) = self.depths.iter().find(|d| !DEPTH_CHOICES.contains(d)) {
                return Err(Error::Config(format!("depth {d} is not a grid choice")));
            }
            if let Some(w) = self.widths.iter().find(|w| !WIDTH_CHOICES.contains(w)) {
                return Err(Error::Config(format!("width {w} is not a grid choice")));
            }
        }
        if let SearchMode::PerTask(t) = self.mode {
            if t >= self.n_tasks {
                return Err(Error::Config(format!("task {t} out of range for {} tasks", self.n_tasks)));
            }
        }
        Ok(())
    }

    fn stages(&self) -> Vec<StageSpec> {
        self.depths
            .iter()
            .flat_map(|&d| self.widths.iter().map(move |&w| StageSpec::new(d, w)))
            .collect()
    }
}

/// Depth-major, then width; for the extended class stage-1 varies slowest.
pub fn enumerate_grid(grid: &GridSpec) -> Vec<NetworkSpec> {
    let stages = grid.stages();
    let finish = |mut spec: NetworkSpec| {
        spec.dropout = grid.dropout;
        spec.off_grid = grid.off_grid;
        spec
    };
    match grid.arch {
        ArchClass::Baseline | ArchClass::SimpleFurcated => stages
            .iter()
            .map(|&s1| finish(NetworkSpec::new(grid.arch, s1, None, grid.n_tasks)))
            .collect(),
        ArchClass::ExtendedFurcated => stages
            .iter()
            .flat_map(|&s1| {
                stages
                    .iter()
                    .map(move |&s2| NetworkSpec::extended(s1, s2, grid.n_tasks))
            })
            .map(finish)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TrialOutcome {
    Completed {
        criterion: f64,
        val_loss: f64,
        val_rmse: Vec<f64>,
        test_rmse: Vec<f64>,
        params: usize,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Position in enumeration order.
    pub index: usize,
    pub spec: NetworkSpec,
    pub outcome: TrialOutcome,
}

impl Trial {
    pub fn criterion(&self) -> Option<f64> {
        match self.outcome {
            TrialOutcome::Completed { criterion, .. } => Some(criterion),
            TrialOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub mode: SearchMode,
    /// Every trial that was run, in enumeration order.
    pub trials: Vec<Trial>,
    /// Indices into `trials` of completed trials, best first.
    pub ranking: Vec<usize>,
}

impl SearchResult {
    pub fn winner(&self) -> Option<&Trial> {
        self.ranking.first().map(|&i| &self.trials[i])
    }

    pub fn failed(&self) -> impl Iterator<Item = &Trial> {
        self.trials
            .iter()
            .filter(|t| matches!(t.outcome, TrialOutcome::Failed { .. }))
    }
}

/// Lower criterion first, then fewer parameters, then enumeration order.
fn rank(trials: &[Trial]) -> Vec<usize> {
    let key = |t: &Trial| match &t.outcome {
        TrialOutcome::Completed { criterion, params, .. } => Some((*criterion, *params, t.index)),
        TrialOutcome::Failed { .. } => None,
    };
    let mut completed: Vec<(usize, (f64, usize, usize))> = trials
        .iter()
        .enumerate()
        .filter_map(|(i, t)| key(t).map(|k| (i, k)))
        .collect();
    completed.sort_by(|(_, a), (_, b)| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    completed.into_iter().map(|(i, _)| i).collect()
}

fn run_trial(
    spec: &NetworkSpec,
    dataset: &DescriptorDataset,
    split: &SplitPlan,
    config: &TrainConfig,
    mode: SearchMode,
) -> Result<TrialOutcome> {
    let params = param_count(&build(spec, 0)?);
    let cv = cross_validate(spec, dataset, split, config)?;
    let criterion = match mode {
        SearchMode::PerTask(t) => cv.val_rmse[t],
        SearchMode::Joint => cv.val_loss,
    };
    if !criterion.is_finite() {
        return Err(Error::Numeric(format!("selection criterion is {criterion}")));
    }
    Ok(TrialOutcome::Completed {
        criterion,
        val_loss: cv.val_loss,
        val_rmse: cv.val_rmse,
        test_rmse: cv.test_rmse,
        params,
    })
}

/// Cross-validates each spec of the grid (the first `budget` in
/// enumeration order when set) and ranks the completed trials. Trials that
/// error are kept with their reason and left out of the ranking.
pub fn grid_search(
    grid: &GridSpec,
    dataset: &DescriptorDataset,
    split: &SplitPlan,
    config: &TrainConfig,
    budget: Option<usize>,
) -> Result<SearchResult> {
    grid.validate()?;
    if grid.n_tasks != dataset.n_tasks() {
        return Err(Error::Config(format!(
            "grid is for {} tasks, dataset has {}",
            grid.n_tasks,
            dataset.n_tasks()
        )));
    }
    let specs = enumerate_grid(grid);
    let n = match budget {
        Some(0) => return Err(Error::Config("budget must be at least 1".into())),
        Some(b) if b > specs.len() => {
            return Err(Error::Config(format!(
                "budget {b} exceeds the grid size {}",
                specs.len()
            )))
        }
        Some(b) => b,
        None => specs.len(),
    };

    let mut trials = Vec::with_capacity(n);
    for (index, spec) in specs.into_iter().take(n).enumerate() {
        let spec = spec.with_layout(dataset.layout());
        let outcome = match run_trial(&spec, dataset, split, config, grid.mode) {
            Ok(o) => o,
            Err(e) => {
                log::warn!("trial {index} ({spec}) failed: {e}");
                TrialOutcome::Failed { reason: e.to_string() }
            }
        };
        if let TrialOutcome::Completed { criterion, .. } = &outcome {
            log::info!("trial {index} ({spec}): criterion {criterion:.6}");
        }
        trials.push(Trial { index, spec, outcome });
    }
    let ranking = rank(&trials);
    Ok(SearchResult {
        mode: grid.mode,
        trials,
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        let count = |arch| enumerate_grid(&GridSpec::new(arch, 1, SearchMode::Joint)).len();
        assert_eq!(count(ArchClass::Baseline), 24);
        assert_eq!(count(ArchClass::SimpleFurcated), 24);
        assert_eq!(count(ArchClass::ExtendedFurcated), 576);
    }

    #[test]
    fn restricted_grid_single_spec() {
        let mut g = GridSpec::new(ArchClass::Baseline, 1, SearchMode::Joint);
        g.depths = vec![3];
        g.widths = vec![128];
        let specs = enumerate_grid(&g);
        assert_eq!(specs.len(), 1);
        assert_eq!(specs[0].stage1.to_string(), "3(128)");
    }

    #[test]
    fn enumeration_order_and_validity() {
        let specs = enumerate_grid(&GridSpec::new(ArchClass::ExtendedFurcated, 3, SearchMode::Joint));
        assert_eq!(specs[0].stage1, StageSpec::new(2, 16));
        assert_eq!(specs[1].stage2, Some(StageSpec::new(2, 32)));
        assert_eq!(specs[24].stage1, StageSpec::new(2, 32));
        assert!(specs.iter().all(|s| s.validate().is_ok()));
    }

    #[test]
    fn ranking_breaks_ties_by_params_then_order() {
        let spec = |w| NetworkSpec::baseline(StageSpec::new(2, w), 1);
        let done = |criterion, params| TrialOutcome::Completed {
            criterion,
            val_loss: criterion,
            val_rmse: vec![criterion],
            test_rmse: vec![criterion],
            params,
        };
        let trials = vec![
            Trial { index: 0, spec: spec(16), outcome: done(0.5, 100) },
            Trial { index: 1, spec: spec(32), outcome: done(0.2, 300) },
            Trial { index: 2, spec: spec(64), outcome: TrialOutcome::Failed { reason: "nan".into() } },
            Trial { index: 3, spec: spec(128), outcome: done(0.2, 200) },
            Trial { index: 4, spec: spec(256), outcome: done(0.2, 200) },
        ];
        assert_eq!(rank(&trials), vec![3, 4, 1, 0]);
    }

    #[test]
    fn off_grid_choices_need_flag() {
        let mut g = GridSpec::new(ArchClass::Baseline, 1, SearchMode::Joint);
        g.widths = vec![8];
        assert!(g.validate().is_err());
        g.off_grid = true;
        assert!(g.validate().is_ok());
        let g = GridSpec::new(ArchClass::Baseline, 1, SearchMode::PerTask(2));
        assert!(g.validate().is_err());
    }
}
