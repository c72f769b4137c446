use std::path::Path;

use clap::Args;
use furcnet::data::{load_csv, load_csv_with_labels, log_labels, LabelColumns};
use furcnet::eval::{read_report_csv, ReportRow};
use furcnet::{ArchClass, DescriptorDataset, LabelTransform, NetworkSpec, StageSpec, TaskWeights, TrainConfig};
use serde_json::json;

use crate::error::{CliError, CliResult};

/// Training and data flags shared by `train` and `grid`.
#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    /// Label columns: a count (the first N non-feature columns) or a
    /// comma-separated list of names.
    #[arg(long, default_value = "3")]
    pub tasks: String,

    /// Per-task loss weights, e.g. "5:30:1". Defaults to 5:30:1 for three
    /// tasks and 1 otherwise.
    #[arg(long)]
    pub weights: Option<String>,

    /// Task (name or index) whose weight is multiplied by the overweight
    /// factor.
    #[arg(long)]
    pub overweight_task: Option<String>,

    #[arg(long, default_value_t = furcnet::train::DEFAULT_OVERWEIGHT_FACTOR)]
    pub overweight_factor: f64,

    #[arg(long, default_value_t = 500)]
    pub epochs: usize,

    #[arg(long, default_value_t = 30)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 50)]
    pub patience: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,

    #[arg(long, default_value_t = furcnet::arch::DEFAULT_DROPOUT)]
    pub dropout: f64,

    /// Folds trained concurrently. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,

    /// Train on raw labels instead of their natural log.
    #[arg(long)]
    pub no_log: bool,

    /// Allow depths, widths and task counts outside the search grid.
    #[arg(long)]
    pub off_grid: bool,
}

pub fn parse_arch(s: &str) -> CliResult<ArchClass> {
    s.parse().map_err(|e: furcnet::Error| CliError::usage(e.to_string()))
}

pub fn parse_stage(flag: &str, s: &str) -> CliResult<StageSpec> {
    s.parse()
        .map_err(|e: furcnet::Error| CliError::usage(format!("--{flag}: {e}")))
}

/// Stage-1 and stage-2 specs for `arch`, with stage-2 defaulting to
/// `2(128)` for the extended class and rejected for the others.
pub fn resolve_stages(
    arch: ArchClass,
    stage1: &str,
    stage2: Option<&str>,
) -> CliResult<(StageSpec, Option<StageSpec>)> {
    let stage1 = parse_stage("stage1", stage1)?;
    let stage2 = match (arch, stage2) {
        (ArchClass::ExtendedFurcated, s) => Some(parse_stage("stage2", s.unwrap_or("2(128)"))?),
        (_, None) => None,
        (_, Some(_)) => {
            return Err(CliError::usage(format!(
                "--stage2 is only valid with --arch extended, not {arch}"
            )))
        }
    };
    Ok((stage1, stage2))
}

pub fn label_columns(tasks: &str) -> CliResult<LabelColumns> {
    let tasks = tasks.trim();
    if let Ok(n) = tasks.parse::<usize>() {
        if n == 0 {
            return Err(CliError::usage("--tasks must be at least 1"));
        }
        return Ok(LabelColumns::First(n));
    }
    let names: Vec<String> = tasks
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(CliError::usage("--tasks is empty"));
    }
    Ok(LabelColumns::Named(names))
}

pub fn load_dataset(path: &Path, tasks: &str, log: bool) -> CliResult<DescriptorDataset> {
    let (dataset, report) = match label_columns(tasks)? {
        LabelColumns::First(n) => load_csv(path, n),
        LabelColumns::Named(names) => {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            load_csv_with_labels(path, &names)
        }
    }
    .map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    log::info!(
        "loaded {} rows ({} dropped) with labels {:?}",
        dataset.len(),
        report.dropped_rows,
        dataset.label_names()
    );
    if log {
        Ok(log_labels(&dataset)?)
    } else {
        Ok(dataset)
    }
}

fn task_index(names: &[String], s: &str) -> CliResult<usize> {
    if let Some(i) = names.iter().position(|n| n == s) {
        return Ok(i);
    }
    match s.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(i),
        _ => Err(CliError::usage(format!(
            "--overweight-task {s:?} is not one of {} or an index below {}",
            names.join(","),
            names.len()
        ))),
    }
}

pub fn task_weights(args: &TrainingArgs, names: &[String]) -> CliResult<TaskWeights> {
    let n = names.len();
    let mut weights = match &args.weights {
        None => TaskWeights::default_for(n),
        Some(s) => {
            let w = s
                .split([':', ','])
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::usage(format!("--weights {s:?} is not a list of numbers")))?;
            if w.len() != n {
                return Err(CliError::usage(format!(
                    "--weights has {} values for {n} tasks",
                    w.len()
                )));
            }
            TaskWeights::new(w)
        }
    };
    if let Some(t) = &args.overweight_task {
        weights = weights.with_overweight(task_index(names, t)?, args.overweight_factor);
    }
    weights.validate()?;
    Ok(weights)
}

pub fn train_config(args: &TrainingArgs, weights: TaskWeights, seed: u64) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::for_tasks(weights.n_tasks(), seed);
    config.task_weights = weights;
    config.max_epochs = args.epochs;
    config.batch_size = args.batch_size;
    config.patience = args.patience;
    config.learning_rate = args.lr;
    config.jobs = args.jobs.max(1);
    config.validate()?;
    Ok(config)
}

pub fn network_spec(
    arch: ArchClass,
    stage1: StageSpec,
    stage2: Option<StageSpec>,
    n_tasks: usize,
    args: &TrainingArgs,
) -> CliResult<NetworkSpec> {
    let mut spec = NetworkSpec::new(arch, stage1, stage2, n_tasks).with_dropout(args.dropout);
    if args.off_grid {
        spec = spec.off_grid();
    }
    spec.validate()?;
    Ok(spec)
}

/// Report label: class name, `-MT` for multi-task heads, `-OW` when a task
/// is overweighted.
pub fn model_label(arch: ArchClass, n_tasks: usize, weights: &TaskWeights) -> String {
    let mut label = arch.display_name().to_string();
    if n_tasks > 1 {
        label.push_str("-MT");
    }
    if weights.overweight.is_some() {
        label.push_str("-OW");
    }
    label
}

pub fn read_reference(path: Option<&Path>) -> CliResult<Vec<ReportRow>> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            Ok(read_report_csv(file)?)
        }
    }
}

/// Resolved training settings for the manifest. `jobs` is left out since it
/// does not affect results.
pub fn config_json(config: &TrainConfig, names: &[String], transform: LabelTransform, args: &TrainingArgs) -> serde_json::Value {
    let w = &config.task_weights;
    json!({
        "tasks": names,
        "label_transform": transform,
        "weights": w.weights,
        "overweight": w.overweight.map(|(t, f)| json!({ "task": names[t], "factor": f })),
        "effective_weights": w.effective().unwrap_or_default(),
        "epochs": config.max_epochs,
        "batch_size": config.batch_size,
        "patience": config.patience,
        "min_delta": config.min_delta,
        "learning_rate": config.learning_rate,
        "beta1": config.beta1,
        "beta2": config.beta2,
        "epsilon": config.epsilon,
        "dropout": args.dropout,
        "off_grid": args.off_grid,
    })
}
