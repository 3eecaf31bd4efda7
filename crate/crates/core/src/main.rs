use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatcast::cli::{
    cmd_diagnose, cmd_evaluate, cmd_forecast, cmd_run, cmd_synth, parse_scenario, write_forecast, Overrides,
    RunConfig, Stage, StageError,
};
use heatcast::conformal::ScorePredictor;
use heatcast::Error;

#[derive(Parser)]
#[command(name = "heatcast", version, about = "High-quantile temperature forecasts with conformal intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct AlphaArgs {
    /// Miscoverage level; repeat for several.
    #[arg(long = "alpha")]
    alphas: Vec<f64>,
    /// Bonferroni-divide the levels across the requested alphas.
    #[arg(long)]
    simultaneous: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train, calibrate, forecast the test season and write all artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        alpha: AlphaArgs,
        #[arg(long, value_parser = ["observed", "fitted"])]
        score_predictor: Option<String>,
        #[arg(long)]
        calibrated_conformal: bool,
    },
    /// Interval forecasts for new predictor rows (columns x1..x8).
    Forecast {
        /// The `models` directory of a run.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        predictors: PathBuf,
        /// Output CSV; metadata goes to `<out>.meta.json`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        alpha: AlphaArgs,
    },
    /// Print whiteness, AR(1) and score diagnostics of a `models` directory.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
    },
    /// Recompute coverage and interval-length summaries of a run directory.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic two-season dataset and a run config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario overrides as `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn config_error(e: Error) -> StageError {
    StageError { stage: Stage::Config, source: e }
}

fn execute(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Run { config, out, seed, alpha, score_predictor, calibrated_conformal } => {
            let mut cfg = RunConfig::from_file(&config).map_err(config_error)?;
            let score_predictor = score_predictor
                .map(|s| s.parse::<ScorePredictor>())
                .transpose()
                .map_err(config_error)?;
            Overrides {
                out_dir: out,
                seed,
                alphas: alpha.alphas,
                simultaneous: alpha.simultaneous,
                score_predictor,
                calibrated: calibrated_conformal,
            }
            .apply(&mut cfg);
            let outcome = cmd_run(&cfg)?;
            for w in outcome.manifest.warnings.iter().chain(&outcome.manifest.notes) {
                eprintln!("warning: {w}");
            }
            println!("run complete: {}", cfg.out_dir.display());
        }
        Command::Forecast { model, predictors, out, alpha } => {
            let (intervals, meta) = cmd_forecast(&model, &predictors, &alpha.alphas, alpha.simultaneous)?;
            write_forecast(&out, &intervals, &meta).map_err(|e| StageError { stage: Stage::Output, source: e })?;
            println!("{} intervals written to {}", intervals.len(), out.display());
        }
        Command::Diagnose { model } => print!("{}", cmd_diagnose(&model)?),
        Command::Evaluate { out } => print!("{}", cmd_evaluate(&out)?),
        Command::Synth { out, seed, config } => {
            let text = match config {
                Some(p) => std::fs::read_to_string(&p).map_err(|e| config_error(e.into()))?,
                None => String::new(),
            };
            let spec = parse_scenario(&text).map_err(config_error)?;
            let conf = cmd_synth(&out, &spec, seed)?;
            println!("run config written to {}", conf.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
