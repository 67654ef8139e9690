use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tailcal::config::{Config, ExperimentKind};
use tailcal::experiment::run_experiment;
use tailcal::Error;

/// Calibration audits for trajectory-uncertainty models.
#[derive(Parser)]
#[command(name = "tailcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaussian and noisy-rational fits on the synthetic noise generators.
    GaussianAudit(RunArgs),
    /// Mixture fits on the synthetic noise generators.
    GmmAudit(RunArgs),
    /// Quantile-tube calibration at one training size.
    QuantileAudit(RunArgs),
    /// δ_min across training sizes and its log-log fit.
    QuantileScaling(RunArgs),
    /// Scenario-hull bound checked against Monte Carlo violation.
    ScenarioOpt(RunArgs),
    /// Two-mode decision intervals.
    HmmIntervals(RunArgs),
    /// Calibration audit on ingested scenario files.
    IngestAudit(RunArgs),
    /// Parse a scenario CSV and re-emit it with a malformed-row report.
    Ingest(RunArgs),
    /// Per-step Gaussian tube boundaries for plotting.
    ExportTube(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `experiment.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Smaller test sets and Monte Carlo samples.
    #[arg(long)]
    quick: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::GaussianAudit(a) => (ExperimentKind::GaussianAudit, a),
            Command::GmmAudit(a) => (ExperimentKind::GmmAudit, a),
            Command::QuantileAudit(a) => (ExperimentKind::QuantileAudit, a),
            Command::QuantileScaling(a) => (ExperimentKind::QuantileScaling, a),
            Command::ScenarioOpt(a) => (ExperimentKind::ScenarioOpt, a),
            Command::HmmIntervals(a) => (ExperimentKind::HmmIntervals, a),
            Command::IngestAudit(a) => (ExperimentKind::IngestAudit, a),
            Command::Ingest(a) => (ExperimentKind::Ingest, a),
            Command::ExportTube(a) => (ExperimentKind::ExportTube, a),
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<PathBuf, Error> {
    let (mut cfg, text) = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    cfg.experiment.quick |= args.quick;
    let out = args.out.unwrap_or_else(|| cfg.experiment.output_dir.clone());
    let output = run_experiment(kind, &cfg, &text)?;
    output.write(&out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(out) => {
            println!("{}: wrote {}", kind.name(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
