use clap::Args;
use furcnet::gradcheck::{analytic_gradients, compare_gradients, random_problem, DEFAULT_STEP};
use furcnet::{build, TaskWeights};

use crate::common::{parse_arch, resolve_stages};
use crate::error::{CliError, CliResult};

pub const THRESHOLD: f64 = 1e-4;

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "extended")]
    pub arch: String,

    #[arg(long, default_value = "2(64)")]
    pub stage1: String,

    /// Extended only, default "2(128)".
    #[arg(long)]
    pub stage2: Option<String>,

    #[arg(long, default_value_t = 3)]
    pub tasks: usize,

    #[arg(long, default_value_t = 4)]
    pub rows: usize,

    #[arg(long, env = "FURCNET_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub off_grid: bool,

    /// Scales the analytic gradient by 1.01 before comparing.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

/// Prints the error and returns whether it is below the threshold.
pub fn run(args: &GradcheckArgs) -> CliResult<bool> {
    let arch = parse_arch(&args.arch)?;
    let (stage1, stage2) = resolve_stages(arch, &args.stage1, args.stage2.as_deref())?;
    let mut spec = furcnet::NetworkSpec::new(arch, stage1, stage2, args.tasks);
    if args.off_grid {
        spec = spec.off_grid();
    }
    if args.rows == 0 {
        return Err(CliError::usage("--rows must be at least 1"));
    }
    let model = build(&spec, args.seed)?;
    let (x, y) = random_problem(&model, args.rows, args.seed.wrapping_add(1));
    let weights = TaskWeights::default_for(args.tasks);
    let mut analytic = analytic_gradients(&model, x.view(), y.view(), &weights)?;
    if args.corrupt_backward {
        analytic.scale(1.01);
    }
    let report = compare_gradients(&model, &analytic, x.view(), y.view(), &weights, DEFAULT_STEP)?;
    println!("max_relative_error {:e}", report.max_relative_error);
    if let Some((layer, index)) = &report.worst {
        log::info!("worst parameter: {layer}[{index}] of {}", report.n_params);
    }
    Ok(report.max_relative_error < THRESHOLD)
}
