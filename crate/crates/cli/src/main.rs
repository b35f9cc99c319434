//! Command-line front end: one subcommand per pipeline stage.
//!
//! Every setting lives in the TOML configuration; environment variables
//! prefixed `ERP_REGIME__` override individual keys, e.g.
//! `ERP_REGIME__HURST__WINDOW=250`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use erp_regime::pipeline::{
    run_pipeline, MaskFilter, PipelineConfig, PipelineError, RunOptions, Stage,
};

#[derive(Debug, Parser)]
#[command(
    name = "erp-regime",
    version,
    about = "Local Hurst regimes and equity premium predictability"
)]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "erp-regime.toml")]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Last stage to run (ingest, hurst, regime, predictors, insample, oos,
    /// allocate, report or all).
    #[arg(long, global = true, value_parser = parse_stage)]
    stage: Option<Stage>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate the inputs.
    Ingest,
    /// GARCH filter and sliding-window local Hurst exponents.
    Hurst,
    /// Bullish ratio, Bullish Index and shocks.
    Regime,
    /// The 28 monthly predictors.
    Predictors,
    /// In-sample predictive regressions.
    Insample,
    /// Recursive out-of-sample forecasts.
    Oos,
    /// Allocation backtests and holding-period gains.
    Allocate(AllocateArgs),
    /// Summary statistics and robustness checks.
    Report,
    /// Every stage.
    All,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    /// Relative risk aversion.
    #[arg(long)]
    kappa: Option<f64>,
    /// Proportional cost per unit turnover in basis points.
    #[arg(long)]
    cost_bps: Option<f64>,
    /// Months kept: all, exclude-recession, before=YYYY-MM or from=YYYY-MM.
    #[arg(long, default_value = "all", value_parser = parse_mask)]
    mask: MaskFilter,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse()
}

fn parse_mask(s: &str) -> Result<MaskFilter, String> {
    s.parse()
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Ingest => Stage::Ingest,
            Command::Hurst => Stage::Hurst,
            Command::Regime => Stage::Regime,
            Command::Predictors => Stage::Predictors,
            Command::Insample => Stage::Insample,
            Command::Oos => Stage::Oos,
            Command::Allocate(_) => Stage::Allocate,
            Command::Report | Command::All => Stage::Report,
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stage = match (&cli.command, cli.stage) {
        (Some(c), Some(s)) if c.stage() != s => {
            return Err(PipelineError::new(
                "cli",
                format!("--stage {s} conflicts with subcommand `{}`", c.stage()),
            ))
        }
        (Some(c), _) => c.stage(),
        (None, s) => s.unwrap_or(Stage::Report),
    };
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut opts = RunOptions {
        stage,
        ..Default::default()
    };
    if let Some(Command::Allocate(a)) = &cli.command {
        if let Some(k) = a.kappa {
            cfg.allocation.kappa = k;
        }
        if let Some(c) = a.cost_bps {
            cfg.allocation.cost_bps = c;
        }
        opts.mask = a.mask;
    }
    let summary = run_pipeline(&cfg, &opts)?;
    // a closed stdout is not a pipeline failure
    let mut o = std::io::stdout().lock();
    let _ = writeln!(
        o,
        "stage {} complete; outputs in {}",
        stage,
        summary.dir.display()
    );
    for (name, hash) in &summary.manifest.outputs {
        let _ = writeln!(o, "  {name}  {}", &hash[..12]);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("erp-regime: {e}");
            ExitCode::FAILURE
        }
    }
}
