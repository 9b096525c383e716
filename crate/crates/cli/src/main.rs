//! `twophase`: estimation, simulation and density fitting from the command line.

mod density;
mod estimate;
mod manifest;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use twophase_core::{DensityMethod, Learner, MsmWeights, SupportMode};

#[derive(Debug, Parser)]
#[command(name = "twophase", version, about = "Shift-intervention effects under two-phase sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the shifted outcome mean on a CSV dataset.
    Estimate(EstimateArgs),
    /// Run a simulation study from a JSON config or a bundled config name.
    Simulate(SimulateArgs),
    /// Fit or evaluate a conditional density of `a` given the covariates.
    #[command(subcommand)]
    Density(DensityCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum EstimatorArg {
    Tmle,
    Onestep,
    Plugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum WeightingArg {
    Augmented,
    Reweighted,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum LearnerArg {
    Glm,
    Hal,
}

impl From<LearnerArg> for Learner {
    fn from(v: LearnerArg) -> Self {
        match v {
            LearnerArg::Glm => Learner::Glm,
            LearnerArg::Hal => Learner::Hal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum DensityArg {
    Gaussian,
    Haldensify,
}

impl From<DensityArg> for DensityMethod {
    fn from(v: DensityArg) -> Self {
        match v {
            DensityArg::Gaussian => DensityMethod::Gaussian,
            DensityArg::Haldensify => DensityMethod::Haldensify,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum SupportArg {
    EmpiricalMax,
    DensityThreshold,
    Unbounded,
}

impl From<SupportArg> for SupportMode {
    fn from(v: SupportArg) -> Self {
        match v {
            SupportArg::EmpiricalMax => SupportMode::EmpiricalMax,
            SupportArg::DensityThreshold => SupportMode::DensityThreshold,
            SupportArg::Unbounded => SupportMode::Unbounded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum MsmWeightArg {
    Uniform,
    InverseVariance,
}

impl From<MsmWeightArg> for MsmWeights {
    fn from(v: MsmWeightArg) -> Self {
        match v {
            MsmWeightArg::Uniform => MsmWeights::Uniform,
            MsmWeightArg::InverseVariance => MsmWeights::InverseVariance,
        }
    }
}

#[derive(Debug, Args, serde::Serialize)]
struct EstimateArgs {
    /// CSV with covariate columns and `a`, `y`, `c` (`a` empty where `c` is 0).
    #[arg(long)]
    data: PathBuf,
    /// Shift values, comma separated.
    #[arg(long, required = true, num_args = 1, value_delimiter = ',', allow_hyphen_values = true)]
    delta: Vec<f64>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Tmle)]
    estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Augmented)]
    variant: WeightingArg,
    #[arg(long, value_enum, default_value_t = LearnerArg::Glm)]
    g_method: LearnerArg,
    #[arg(long, value_enum, default_value_t = LearnerArg::Glm)]
    q_method: LearnerArg,
    #[arg(long, value_enum, default_value_t = DensityArg::Gaussian)]
    density_method: DensityArg,
    #[arg(long, value_enum, default_value_t = LearnerArg::Glm)]
    projection_method: LearnerArg,
    #[arg(long, value_enum, default_value_t = SupportArg::EmpiricalMax)]
    support: SupportArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Seed for cross-validation fold assignment.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Min-max scale a continuous outcome onto [0, 1]; results are reported on the original scale.
    #[arg(long)]
    scale_outcome: bool,
    /// Also fit a linear working model in the shift over the estimate grid.
    #[arg(long)]
    msm: bool,
    #[arg(long, value_enum, default_value_t = MsmWeightArg::Uniform)]
    msm_weights: MsmWeightArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Path to a JSON study config, or one of the bundled names.
    #[arg(long)]
    config: String,
    /// Output directory; defaults to the config's `output` entry.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum DensityCommand {
    /// Fit a density model and write it as JSON.
    Fit(DensityFitArgs),
    /// Evaluate a saved model at each row of a CSV.
    Predict(DensityPredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
enum BinRuleArg {
    EqualRange,
    EqualMass,
}

#[derive(Debug, Args, serde::Serialize)]
struct DensityFitArgs {
    /// CSV with an `a` column; every other column except `y`, `c` and `weight` is a covariate.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = DensityArg::Haldensify)]
    method: DensityArg,
    /// Candidate bin counts, comma separated.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [5usize, 10, 20])]
    bins: Vec<usize>,
    #[arg(long, value_enum, default_value_t = BinRuleArg::EqualMass)]
    bin_rule: BinRuleArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DensityPredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit 2.
    Usage(String),
    /// Data, model or runtime failure: exit 1.
    Data(String),
}

impl From<twophase_core::Error> for CliError {
    fn from(e: twophase_core::Error) -> Self {
        match e {
            twophase_core::Error::Config(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => estimate::run(&args),
        Command::Simulate(args) => simulate::run(&args),
        Command::Density(DensityCommand::Fit(args)) => density::fit(&args),
        Command::Density(DensityCommand::Predict(args)) => density::predict(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
