use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use risk_sieve::RiskModel;

mod commands;
mod output;

/// Usage or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "risk-sieve", version, about = "Risk-based importance filtering of traffic agents")]
struct Cli {
    /// Worker threads for scenario-parallel work.
    #[arg(long, global = true, env = "RISK_SIEVE_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic intersection scenarios.
    Generate(GenerateArgs),
    /// Score every agent of every scenario with one or more models.
    Score(ScoreArgs),
    /// ROC sweep of models against the survival baseline.
    Roc(RocArgs),
    /// Calibrate pipeline stage thresholds on part of a dataset.
    Calibrate(CalibrateArgs),
    /// Run a filter pipeline and write per-scenario traces.
    Pipeline(PipelineArgs),
    /// Time per-pair scoring calls.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration with optional `generator` and `risk` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Overrides `generator.n_scenarios`.
    #[arg(long)]
    n_scenarios: Option<usize>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<RiskModel>,
}

#[derive(Debug, Args)]
struct RocArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Defaults to all models.
    #[arg(long, value_delimiter = ',')]
    models: Vec<RiskModel>,
    /// Leave scenarios without positives (negatives) out of the TPR (FPR) averages.
    #[arg(long)]
    exclude_degenerate: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Pipeline to calibrate; defaults to the recommended one.
    #[arg(long)]
    pipeline: Option<PathBuf>,
    /// Largest tolerated aggregate false-negative rate per stage.
    #[arg(long, default_value_t = 0.0)]
    fn_rate: f64,
    /// Fraction of scenarios (taken from the front) used for calibration.
    #[arg(long, default_value_t = 0.5)]
    split: f64,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Pipeline file; defaults to the recommended one.
    #[arg(long)]
    pipeline: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Defaults to all models.
    #[arg(long, value_delimiter = ',')]
    models: Vec<RiskModel>,
    /// Timed samples per model.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| UsageError(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Generate(a) => commands::generate(
            a.common.config.as_deref(),
            a.seed,
            a.n_scenarios,
            &a.common.out,
        ),
        Command::Score(a) => commands::score(
            a.common.config.as_deref(),
            &a.input,
            &a.models,
            &a.common.out,
        ),
        Command::Roc(a) => commands::roc(
            a.common.config.as_deref(),
            &a.input,
            &a.models,
            a.exclude_degenerate,
            &a.common.out,
        ),
        Command::Calibrate(a) => commands::calibrate(
            a.common.config.as_deref(),
            &a.input,
            a.pipeline.as_deref(),
            a.fn_rate,
            a.split,
            &a.common.out,
        ),
        Command::Pipeline(a) => commands::pipeline(
            a.common.config.as_deref(),
            &a.input,
            a.pipeline.as_deref(),
            &a.common.out,
        ),
        Command::Bench(a) => commands::bench(
            a.common.config.as_deref(),
            &a.input,
            &a.models,
            a.samples,
            &a.common.out,
        ),
    }
}
