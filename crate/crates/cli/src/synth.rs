use std::path::PathBuf;

use clap::Args;
use furcnet::data::{synth_generate, write_csv, SynthConfig};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::{sidecar, write_file, RunManifest};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rows: u64,

    #[arg(long, env = "FURCNET_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Strength of the cation × anion × temperature interaction term.
    #[arg(long, default_value_t = 0.0)]
    pub interaction: f64,

    /// Standard deviation of the additive label noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,

    #[arg(long, default_value_t = 3)]
    pub tasks: usize,

    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let config = SynthConfig::new(args.rows as usize, args.seed, args.interaction, args.noise).with_tasks(args.tasks);
    let (dataset, coefficients) = synth_generate(&config)?;

    let mut bytes = Vec::new();
    write_csv(&dataset, &mut bytes)?;
    write_file(&args.out, &bytes)?;
    let coef_path = sidecar(&args.out, "coefficients.json");
    let coef = serde_json::to_string_pretty(&coefficients).map_err(|e| CliError::io(e.to_string()))?;
    write_file(&coef_path, format!("{coef}\n").as_bytes())?;

    let mut manifest = RunManifest::new(
        "synth",
        args.seed,
        json!({
            "rows": args.rows,
            "interaction": args.interaction,
            "noise": args.noise,
            "tasks": args.tasks,
            "out": args.out.display().to_string(),
        }),
    );
    manifest.artifact(&args.out);
    manifest.artifact(&coef_path);
    manifest.write_beside(&args.out)?;
    println!("wrote {} rows to {}", dataset.len(), args.out.display());
    Ok(())
}
