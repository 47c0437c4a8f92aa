//! `train` and `sweep`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use svgpvae::config::ExperimentConfig;
use svgpvae::models::save_checkpoint;
use svgpvae::training::{build_experiment, evaluate_experiment, train, EvalReport, RunLog, RunStatus};

use crate::error::{CliError, CliResult};

pub const SUMMARY_SCHEMA: u32 = 1;
pub const SWEEP_SCHEMA: u32 = 1;
pub const CSV_SCHEMA: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.svgp";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EPOCHS_HEADER: &str = "epoch,mean_objective,mean_mse,lengthscale,bias";
pub const SWEEP_HEADER: &str = "param,value,exit_code,status,final_objective,metric,metric_value,lengthscale,wall_time_s";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub model: String,
    pub source: String,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs_completed: usize,
    /// Mean objective over the last completed epoch.
    pub final_objective: Option<f64>,
    pub eval: Option<EvalReport>,
    pub wall_time_s: f64,
    pub jitter_events: usize,
    pub checkpoint: PathBuf,
    /// Version of the `metrics.csv` and `epochs.csv` layouts.
    pub csv_schema: u32,
}

#[derive(Debug, Serialize)]
struct SweepRun {
    value: String,
    exit_code: i32,
    summary: Option<Summary>,
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    schema: u32,
    param: &'a str,
    runs: Vec<SweepRun>,
}

impl Summary {
    pub fn into_result(self) -> CliResult<()> {
        match self.status {
            RunStatus::Completed => Ok(()),
            RunStatus::Aborted { epoch, step, reason } => Err(CliError::Numerical(format!(
                "{reason} at epoch {epoch}, step {step}; last good checkpoint: {}",
                self.checkpoint.display()
            ))),
        }
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn epochs_csv(log: &RunLog) -> String {
    let mut s = format!("{EPOCHS_HEADER}\n");
    for e in &log.epochs {
        let bias = e.bias.map(|b| format!("{b:e}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{}",
            e.epoch, e.mean_objective, e.mean_mse, e.lengthscale, bias
        );
    }
    s
}

/// Trains per `cfg`, writing everything into `out`.
pub fn run_train(cfg: &ExperimentConfig, base: &Path, out: &Path, force: bool, quiet: bool) -> CliResult<Summary> {
    if !force && out.join(SUMMARY_FILE).exists() {
        return Err(CliError::Io(format!(
            "{} already holds a run; pass --force to overwrite",
            out.display()
        )));
    }
    let mut exp = build_experiment(cfg, base)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    let start = Instant::now();
    let total = cfg.training.epochs;
    let every = cfg.training.checkpoint_every;
    let report_every = (total / 20).max(1);
    let log = train(&mut exp, |epoch, state, log| {
        if every > 0 && epoch % every == 0 {
            save_checkpoint(state, &out.join(format!("checkpoint-epoch{epoch:05}.svgp")))?;
        }
        if !quiet && (epoch % report_every == 0 || epoch == total) {
            let e = log.epochs.last().expect("epoch just recorded");
            eprintln!(
                "epoch {epoch}/{total} objective {:.4} mse {:.5} lengthscale {:.4} ({:.1}s)",
                e.mean_objective,
                e.mean_mse,
                e.lengthscale,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&exp.state, &checkpoint)?;
    std::fs::write(out.join("runlog.json"), log.to_json())?;
    std::fs::write(out.join("metrics.csv"), log.steps_csv())?;
    std::fs::write(out.join("epochs.csv"), epochs_csv(&log))?;
    let eval = evaluate_experiment(&exp).ok();
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        model: kebab(&cfg.model.kind),
        source: kebab(&cfg.data.source),
        seed: cfg.training.seed,
        status: log.status.clone(),
        epochs_completed: log.epochs.len(),
        final_objective: log.epochs.last().map(|e| e.mean_objective),
        eval,
        wall_time_s,
        jitter_events: log.steps.iter().map(|s| s.jitter_events).sum(),
        checkpoint,
        csv_schema: CSV_SCHEMA,
    };
    std::fs::write(
        out.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).expect("serializable summary") + "\n",
    )?;
    Ok(summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One `train` subprocess per value; returns the path of `sweep.csv`.
pub fn run_sweep(
    config: Option<&Path>,
    sets: &[String],
    param: &str,
    values: &[String],
    out: &Path,
    parallel: bool,
    force: bool,
) -> CliResult<PathBuf> {
    let exe = std::env::current_exe()?;
    std::fs::create_dir_all(out)?;
    let command = |value: &str| {
        let mut c = Command::new(&exe);
        c.arg("train").arg("--quiet");
        if let Some(p) = config {
            c.arg("--config").arg(p);
        }
        for s in sets {
            c.arg("--set").arg(s);
        }
        c.arg("--set").arg(format!("{param}={value}"));
        c.arg("--out").arg(run_dir(out, param, value));
        if force {
            c.arg("--force");
        }
        c.stdout(std::process::Stdio::null());
        c
    };
    let mut codes = Vec::with_capacity(values.len());
    if parallel {
        let children = values
            .iter()
            .map(|v| command(v).spawn())
            .collect::<Result<Vec<_>, _>>()?;
        for mut ch in children {
            codes.push(ch.wait()?.code().unwrap_or(-1));
        }
    } else {
        for v in values {
            eprintln!("sweep: {param} = {v}");
            codes.push(command(v).status()?.code().unwrap_or(-1));
        }
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    let mut runs = Vec::with_capacity(values.len());
    for (v, code) in values.iter().zip(&codes) {
        let summary: Option<Summary> = std::fs::read_to_string(run_dir(out, param, v).join(SUMMARY_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        let (status, obj, metric, value, ls, wall) = match &summary {
            Some(s) => (
                match s.status {
                    RunStatus::Completed => "completed".to_string(),
                    RunStatus::Aborted { .. } => "aborted".to_string(),
                },
                opt(s.final_objective),
                s.eval.as_ref().map(|e| e.metric.clone()).unwrap_or_default(),
                opt(s.eval.as_ref().map(|e| e.value)),
                opt(s.eval.as_ref().map(|e| e.lengthscale)),
                format!("{:.3}", s.wall_time_s),
            ),
            None => ("failed".into(), String::new(), String::new(), String::new(), String::new(), String::new()),
        };
        let _ = writeln!(csv, "{param},{v},{code},{status},{obj},{metric},{value},{ls},{wall}");
        runs.push(SweepRun {
            value: v.clone(),
            exit_code: *code,
            summary,
        });
    }
    let report = SweepReport {
        schema: SWEEP_SCHEMA,
        param,
        runs,
    };
    std::fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&report).expect("serializable sweep") + "\n",
    )?;
    let path = out.join("sweep.csv");
    std::fs::write(&path, csv)?;
    if let Some(&code) = codes.iter().find(|&&c| c != 0) {
        let msg = format!("a sweep run exited with code {code}; see {}", path.display());
        return Err(match code {
            2 => CliError::Config(msg),
            3 => CliError::Numerical(msg),
            _ => CliError::Io(msg),
        });
    }
    Ok(path)
}

fn run_dir(out: &Path, param: &str, value: &str) -> PathBuf {
    let safe: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    out.join(format!("{param}={safe}"))
}
