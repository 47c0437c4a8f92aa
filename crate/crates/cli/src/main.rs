//! `svgpvae`: generate data, train, evaluate, and diagnose sparse GP-VAEs.

mod config_io;
mod diagnose;
mod error;
mod evaluate;
mod generate;
mod svg;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use svgpvae::config::{DataSource, ExperimentConfig};

use crate::error::CliResult;

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_ENV: &str = "SVGPVAE_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "svgpvae", version, about = "Sparse Gaussian-process VAEs on a single machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    MovingBall,
    RotatedDigits,
    ToyRegression,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Trajectory,
    ConditionalGeneration,
    Latent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Diagnostic {
    Bias,
    Gradcheck,
    VanishingPhi,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a complete config with every default filled in.
    PrintConfig {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Write the configured dataset and its manifest to a directory.
    GenerateData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Train a model and write checkpoint, logs, and summary.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Output directory; defaults to `$SVGPVAE_OUTPUT_ROOT/<config stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse an output directory that already holds a run.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Score a checkpoint on the held-out data of its config.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// Write an SVG figure here.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Write the metrics JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a diagnostic and print its JSON report.
    Diagnose {
        #[arg(long, value_enum)]
        which: Diagnostic,
        /// Run directory holding `runlog.json` (bias only).
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds (vanishing-phi only).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per value of one config key and tabulate the summaries.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Dotted config key, e.g. `model.inducing`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run all trainings at once as separate processes.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        force: bool,
    },
}

/// `$SVGPVAE_OUTPUT_ROOT/<name>`, with `runs` as the default root.
pub fn default_out(name: &str) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| "runs".into());
    root.join(name)
}

pub fn config_stem(config: Option<&std::path::Path>) -> String {
    config
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".into())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::PrintConfig { preset } => {
            let cfg = match preset {
                None | Some(Preset::MovingBall) => ExperimentConfig::default(),
                Some(Preset::RotatedDigits) => ExperimentConfig::preset(DataSource::RotatedDigits),
                Some(Preset::ToyRegression) => ExperimentConfig::preset(DataSource::ToyRegression),
            };
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::GenerateData { config, sets, out, force } => {
            let cfg = config_io::load_config(config.as_deref(), &sets)?;
            let base = PathBuf::from(".");
            let path = generate::generate_data(&cfg, &base, &out, force)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Train {
            config,
            sets,
            out,
            force,
            quiet,
        } => {
            let cfg = config_io::load_config(config.as_deref(), &sets)?;
            let base = PathBuf::from(".");
            let out = out.unwrap_or_else(|| default_out(&config_stem(config.as_deref())));
            let summary = train::run_train(&cfg, &base, &out, force, quiet)?;
            println!("{}", serde_json::to_string(&summary).expect("serializable summary"));
            summary.into_result()
        }
        Command::Evaluate {
            config,
            sets,
            checkpoint,
            task,
            svg,
            out,
        } => {
            let cfg = config_io::load_config(config.as_deref(), &sets)?;
            let base = PathBuf::from(".");
            let report = evaluate::run_evaluate(&cfg, &base, &checkpoint, task, svg.as_deref())?;
            emit(&serde_json::to_string_pretty(&report).expect("serializable report"), out.as_deref())
        }
        Command::Diagnose {
            which,
            run,
            seed,
            seeds,
            out,
        } => {
            let report = diagnose::run_diagnose(which, run.as_deref(), seed, seeds)?;
            emit(&serde_json::to_string_pretty(&report).expect("serializable report"), out.as_deref())
        }
        Command::Sweep {
            config,
            sets,
            param,
            values,
            out,
            parallel,
            force,
        } => {
            // validate the base config before spawning anything
            config_io::load_config(config.as_deref(), &sets)?;
            let out = out.unwrap_or_else(|| default_out(&format!("sweep-{}", param.replace('.', "-"))));
            let path = train::run_sweep(config.as_deref(), &sets, &param, &values, &out, parallel, force)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn emit(text: &str, out: Option<&std::path::Path>) -> CliResult<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, format!("{text}\n"))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("svgpvae: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
