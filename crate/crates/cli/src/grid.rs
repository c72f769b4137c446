use std::path::PathBuf;

use clap::{Args, ValueEnum};
use furcnet::data::make_split;
use furcnet::eval::{emit_report, ReportRow, RunReport};
use furcnet::search::{grid_search, GridSpec, SearchMode, SearchResult, TrialOutcome};
use furcnet::{ArchClass, TaskWeights};

use crate::common::{config_json, load_dataset, model_label, parse_arch, task_weights, train_config, TrainingArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{sidecar, write_file, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Separate single-task search per property, ranked by its val RMSE.
    PerTask,
    /// One multi-task search ranked by the weighted val loss.
    Joint,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, default_value = "extended")]
    pub arch: String,

    #[arg(long, value_enum, default_value_t = ModeArg::PerTask)]
    pub mode: ModeArg,

    /// Run only the first N specs in enumeration order.
    #[arg(long)]
    pub budget: Option<usize>,

    /// Restrict the depth choices, e.g. "2,3".
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,

    /// Restrict the width choices, e.g. "16,32".
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,

    #[arg(long, env = "FURCNET_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Winners CSV; all trials go to `<out>.trials.csv`.
    #[arg(long, default_value = "grid.csv")]
    pub out: PathBuf,

    #[command(flatten)]
    pub training: TrainingArgs,
}

struct Search {
    /// Property name, or `joint`.
    scope: String,
    result: SearchResult,
}

fn grid_spec(args: &GridArgs, arch: ArchClass, n_tasks: usize, mode: SearchMode) -> GridSpec {
    let mut grid = GridSpec::new(arch, n_tasks, mode);
    if let Some(d) = &args.depths {
        grid.depths = d.clone();
    }
    if let Some(w) = &args.widths {
        grid.widths = w.clone();
    }
    grid.dropout = args.training.dropout;
    grid.off_grid = args.training.off_grid;
    grid
}

fn trials_csv(searches: &[Search]) -> CliResult<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::io(e.to_string());
    wtr.write_record([
        "search", "index", "arch", "stage1", "stage2", "status", "criterion", "val_loss", "params", "reason",
    ])
    .map_err(io)?;
    for s in searches {
        for t in &s.result.trials {
            let head = [
                s.scope.clone(),
                t.index.to_string(),
                t.spec.arch.token().to_string(),
                t.spec.stage1.to_string(),
                t.spec.stage2.map_or_else(|| "-".to_string(), |s| s.to_string()),
            ];
            let tail = match &t.outcome {
                TrialOutcome::Completed {
                    criterion,
                    val_loss,
                    params,
                    ..
                } => [
                    "completed".to_string(),
                    criterion.to_string(),
                    val_loss.to_string(),
                    params.to_string(),
                    String::new(),
                ],
                TrialOutcome::Failed { reason } => [
                    "failed".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    reason.clone(),
                ],
            };
            wtr.write_record(head.iter().chain(&tail)).map_err(io)?;
        }
    }
    wtr.into_inner().map_err(|e| CliError::io(e.to_string()))
}

pub fn run(args: &GridArgs) -> CliResult<()> {
    let arch = parse_arch(&args.arch)?;
    let dataset = load_dataset(&args.data, &args.training.tasks, !args.training.no_log)?;
    let names = dataset.label_names().to_vec();
    let weights = task_weights(&args.training, &names)?;
    let config = train_config(&args.training, weights.clone(), args.seed)?;
    let split = make_split(dataset.len(), args.seed)?;

    let mut searches = Vec::new();
    match args.mode {
        ModeArg::PerTask => {
            let single = train_config(&args.training, TaskWeights::default_for(1), args.seed)?;
            for (t, name) in names.iter().enumerate() {
                let grid = grid_spec(args, arch, 1, SearchMode::PerTask(0));
                let subset = dataset.select_tasks(&[t])?;
                let result = grid_search(&grid, &subset, &split, &single, args.budget)?;
                searches.push(Search {
                    scope: name.clone(),
                    result,
                });
            }
        }
        ModeArg::Joint => {
            let grid = grid_spec(args, arch, names.len(), SearchMode::Joint);
            let result = grid_search(&grid, &dataset, &split, &config, args.budget)?;
            searches.push(Search {
                scope: "joint".into(),
                result,
            });
        }
    }

    let trials_path = sidecar(&args.out, "trials.csv");
    write_file(&trials_path, &trials_csv(&searches)?)?;

    let mut report = RunReport::new(dataset.label_transform(), args.seed);
    for s in &searches {
        for t in s.result.failed() {
            if let TrialOutcome::Failed { reason } = &t.outcome {
                eprintln!("{}: trial {} ({}) failed: {reason}", s.scope, t.index, t.spec);
            }
        }
        let Some(winner) = s.result.winner() else {
            return Err(CliError::numeric(format!(
                "{}: all {} trials failed (see {})",
                s.scope,
                s.result.trials.len(),
                trials_path.display()
            )));
        };
        let TrialOutcome::Completed {
            val_rmse, test_rmse, ..
        } = &winner.outcome
        else {
            unreachable!("ranked trials are completed");
        };
        let (tasks, label, optimization): (Vec<usize>, String, &str) = match args.mode {
            ModeArg::PerTask => (
                vec![names.iter().position(|n| *n == s.scope).expect("scope is a task")],
                model_label(arch, 1, &TaskWeights::default_for(1)),
                "Best for each task",
            ),
            ModeArg::Joint => (
                (0..names.len()).collect(),
                model_label(arch, names.len(), &weights),
                "Best for all tasks",
            ),
        };
        for (k, &t) in tasks.iter().enumerate() {
            report.rows.push(ReportRow {
                property: names[t].clone(),
                model: label.clone(),
                stage1: winner.spec.stage1.to_string(),
                stage2: winner.spec.stage2.map(|s| s.to_string()),
                optimization: optimization.into(),
                val_rmse: val_rmse[k],
                test_rmse: test_rmse[k],
                improvement: None,
            });
        }
    }
    let (text, csv) = emit_report(&report)?;
    write_file(&args.out, csv.as_bytes())?;
    print!("{text}");

    let mut cfg = config_json(&config, &names, dataset.label_transform(), &args.training);
    cfg["command"] = "grid".into();
    cfg["data"] = args.data.display().to_string().into();
    cfg["arch"] = arch.token().into();
    cfg["mode"] = match args.mode {
        ModeArg::PerTask => "per-task",
        ModeArg::Joint => "joint",
    }
    .into();
    cfg["budget"] = args.budget.into();
    cfg["depths"] = grid_spec(args, arch, 1, SearchMode::Joint).depths.into();
    cfg["widths"] = grid_spec(args, arch, 1, SearchMode::Joint).widths.into();
    let mut manifest = RunManifest::new("grid", args.seed, cfg);
    manifest.input(&args.data)?;
    manifest.artifact(&args.out);
    manifest.artifact(&trials_path);
    manifest.write_beside(&args.out)?;
    Ok(())
}
