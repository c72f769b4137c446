use std::path::PathBuf;

use clap::{Args, ValueEnum};
use furcnet::data::make_split;
use furcnet::eval::{emit_report, ImprovementBasis, ReportRow, RunReport};
use furcnet::model_io::serialize;
use furcnet::train::cross_validate;
use furcnet::ArchClass;

use crate::common::{
    config_json, load_dataset, model_label, network_spec, parse_arch, read_reference, resolve_stages, task_weights,
    train_config, TrainingArgs,
};
use crate::error::CliResult;
use crate::manifest::{sidecar, write_file, RunManifest};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,

    /// baseline, simple or extended.
    #[arg(long, default_value = "extended")]
    pub arch: String,

    /// Stage-1 network as "d(w)".
    #[arg(long, default_value = "2(64)")]
    pub stage1: String,

    /// Stage-2 network as "d(w)"; extended only, default "2(128)".
    #[arg(long)]
    pub stage2: Option<String>,

    #[arg(long, env = "FURCNET_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "model.furc")]
    pub out_model: PathBuf,

    /// Report CSV; the text table goes to `<out-report>.txt` and stdout.
    #[arg(long, default_value = "report.csv")]
    pub out_report: PathBuf,

    /// Report CSV of an earlier baseline run, used for % improvement.
    #[arg(long)]
    pub baseline_report: Option<PathBuf>,

    /// RMSE used for % improvement.
    #[arg(long, value_enum, default_value_t = BasisArg::Test)]
    pub improvement_basis: BasisArg,

    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Test,
    Val,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let arch = parse_arch(&args.arch)?;
    let (stage1, stage2) = resolve_stages(arch, &args.stage1, args.stage2.as_deref())?;
    let reference = read_reference(args.baseline_report.as_deref())?;

    let dataset = load_dataset(&args.data, &args.training.tasks, !args.training.no_log)?;
    let names = dataset.label_names().to_vec();
    let weights = task_weights(&args.training, &names)?;
    let spec = network_spec(arch, stage1, stage2, names.len(), &args.training)?;
    let config = train_config(&args.training, weights, args.seed)?;

    let split = make_split(dataset.len(), args.seed)?;
    let cv = cross_validate(&spec.clone().with_layout(dataset.layout()), &dataset, &split, &config)?;

    let best = cv.best_fold();
    write_file(&args.out_model, serialize(&best.fit.model).as_bytes())?;
    let scaler_path = sidecar(&args.out_model, "scaler.json");
    write_file(&scaler_path, format!("{}\n", serde_json::to_string(&best.scaler)?).as_bytes())?;

    let label = model_label(arch, names.len(), &config.task_weights);
    let mut report = RunReport::new(dataset.label_transform(), args.seed);
    report.basis = match args.improvement_basis {
        BasisArg::Test => ImprovementBasis::Test,
        BasisArg::Val => ImprovementBasis::Val,
    };
    for (t, name) in names.iter().enumerate() {
        report.rows.push(ReportRow {
            property: name.clone(),
            model: label.clone(),
            stage1: spec.stage1.to_string(),
            stage2: spec.stage2.map(|s| s.to_string()),
            optimization: "None".into(),
            val_rmse: cv.val_rmse[t],
            test_rmse: cv.test_rmse[t],
            improvement: None,
        });
    }
    if arch != ArchClass::Baseline {
        report.fill_improvements(&reference)?;
    }
    let (text, csv) = emit_report(&report)?;
    write_file(&args.out_report, csv.as_bytes())?;
    let text_path = sidecar(&args.out_report, "txt");
    write_file(&text_path, text.as_bytes())?;
    print!("{text}");

    let mut cfg = config_json(&config, &names, dataset.label_transform(), &args.training);
    cfg["command"] = "train".into();
    cfg["data"] = args.data.display().to_string().into();
    cfg["arch"] = arch.token().into();
    cfg["stage1"] = spec.stage1.to_string().into();
    cfg["stage2"] = spec.stage2.map(|s| s.to_string()).into();
    cfg["rows"] = dataset.len().into();
    cfg["best_fold"] = (best.fold + 1).into();
    cfg["best_epochs"] = cv.summary().best_epochs.into();
    cfg["improvement_basis"] = serde_json::to_value(report.basis)?;
    cfg["baseline_report"] = args.baseline_report.as_ref().map(|p| p.display().to_string()).into();
    let mut manifest = RunManifest::new("train", args.seed, cfg);
    manifest.input(&args.data)?;
    if let Some(p) = &args.baseline_report {
        manifest.input(p)?;
    }
    manifest.artifact(&args.out_model);
    manifest.artifact(&scaler_path);
    manifest.artifact(&args.out_report);
    manifest.artifact(&text_path);
    manifest.write_beside(&args.out_report)?;
    Ok(())
}
