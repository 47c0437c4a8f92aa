//! `diagnose`: bias series, gradient checks, and the vanishing encoder
//! gradient.

use std::path::Path;

use serde::Serialize;
use svgpvae::sparse_gp::bias_trajectory;
use svgpvae::training::{gradient_check_all, vanishing_phi, GradReport, RunLog, VanishingPhi};

use crate::error::{CliError, CliResult};
use crate::Diagnostic;

pub const DIAGNOSE_SCHEMA: u32 = 1;

#[derive(Debug, Serialize)]
#[serde(tag = "which", rename_all = "kebab-case")]
pub enum Report {
    Bias {
        schema: u32,
        /// One value per epoch.
        series: Vec<f64>,
        per_inducing: Vec<f64>,
    },
    Gradcheck {
        schema: u32,
        seed: u64,
        max_rel_error: f64,
        objectives: Vec<GradReport>,
    },
    VanishingPhi {
        schema: u32,
        seeds: Vec<u64>,
        runs: Vec<VanishingPhi>,
        max_lph: f64,
        /// Seeds where the sparse bound's encoder gradient exceeds `1e-8`.
        svgpvae_nonzero: usize,
    },
}

pub fn run_diagnose(which: Diagnostic, run: Option<&Path>, seed: u64, seeds: u64) -> CliResult<Report> {
    match which {
        Diagnostic::Bias => {
            let dir = run.ok_or_else(|| CliError::Config("bias needs --run <dir> of a tracked training run".into()))?;
            let path = dir.join("runlog.json");
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let log: RunLog =
                serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            if log.bias.is_empty() {
                return Err(CliError::Config(
                    "the run did not record bias data; train with diagnostics.bias_tracking = true".into(),
                ));
            }
            Ok(Report::Bias {
                schema: DIAGNOSE_SCHEMA,
                series: bias_trajectory(&log.bias, false)?,
                per_inducing: bias_trajectory(&log.bias, true)?,
            })
        }
        Diagnostic::Gradcheck => {
            let objectives = gradient_check_all(seed)?;
            let max_rel_error = objectives.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            Ok(Report::Gradcheck {
                schema: DIAGNOSE_SCHEMA,
                seed,
                max_rel_error,
                objectives,
            })
        }
        Diagnostic::VanishingPhi => {
            let list: Vec<u64> = (seed..seed + seeds.max(1)).collect();
            let runs = list.iter().map(|&s| vanishing_phi(s)).collect::<Result<Vec<_>, _>>()?;
            Ok(Report::VanishingPhi {
                schema: DIAGNOSE_SCHEMA,
                max_lph: runs.iter().map(|r| r.lph).fold(0.0, f64::max),
                svgpvae_nonzero: runs.iter().filter(|r| r.svgpvae > 1e-8).count(),
                seeds: list,
                runs,
            })
        }
    }
}
