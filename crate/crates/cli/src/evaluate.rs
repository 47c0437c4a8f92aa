//! `evaluate`: held-out metrics for a checkpoint, with optional figures.

use std::path::Path;

use clap::ValueEnum;
use svgpvae::config::ExperimentConfig;
use svgpvae::data::affine_align;
use svgpvae::models::{conditional_generate, load_checkpoint, predict_latents, with_model_latent};
use svgpvae::training::{build_experiment, evaluate_experiment, EvalData, EvalReport, Experiment, TrainData};

use crate::error::{CliError, CliResult};
use crate::svg::{image_grid_svg, trajectory_svg};
use crate::Task;

const GRID_COLUMNS: usize = 12;

fn task_of(eval: &EvalData) -> Task {
    match eval {
        EvalData::MovingBall { .. } => Task::Trajectory,
        EvalData::Rotated { .. } => Task::ConditionalGeneration,
        EvalData::Toy { .. } => Task::Latent,
    }
}

fn name(t: Task) -> String {
    t.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
}

fn check_compatible(exp: &Experiment, ckpt: &svgpvae::models::ModelState) -> CliResult<()> {
    let (a, b) = (&exp.state.spec, &ckpt.spec);
    if a.kind != b.kind || a.data_dim != b.data_dim || a.latent_dim != b.latent_dim {
        return Err(CliError::Config(format!(
            "checkpoint is {:?} with K={} L={}, config expects {:?} with K={} L={}",
            b.kind, b.data_dim, b.latent_dim, a.kind, a.data_dim, a.latent_dim
        )));
    }
    let shapes = |s: &svgpvae::models::ModelState| -> Vec<(String, Vec<usize>)> {
        s.params.iter().map(|p| (p.name.clone(), p.value.shape().to_vec())).collect()
    };
    if shapes(&exp.state) != shapes(ckpt) {
        return Err(CliError::Config("checkpoint parameter shapes do not match the config".into()));
    }
    Ok(())
}

fn write_svg(exp: &Experiment, path: &Path) -> CliResult<()> {
    let state = &exp.state;
    let text = match (&exp.eval, &exp.data) {
        (EvalData::MovingBall { videos }, data) => {
            let v = videos
                .first()
                .ok_or_else(|| CliError::Config("no test videos to plot".into()))?;
            let z = predict_latents(state, data.aux(), &v.frames)?;
            trajectory_svg(&v.trajectory, &affine_align(&z, &v.trajectory)?)
        }
        (
            EvalData::Rotated {
                observed,
                object_id,
                truth,
            },
            TrainData::Fixed { y, aux },
        ) => {
            let x_star = with_model_latent(state, aux).assemble(observed, object_id)?;
            let gen = conditional_generate(state, aux, y, &x_star)?;
            let side = (truth.cols() as f64).sqrt().round() as usize;
            image_grid_svg(&[("held out", truth), ("generated", &gen)], side, GRID_COLUMNS)
        }
        _ => return Err(CliError::Config("no figure for this data source".into())),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run_evaluate(
    cfg: &ExperimentConfig,
    base: &Path,
    checkpoint: &Path,
    task: Option<Task>,
    svg: Option<&Path>,
) -> CliResult<EvalReport> {
    let mut exp = build_experiment(cfg, base)?;
    let have = task_of(&exp.eval);
    if let Some(t) = task.filter(|&t| t != have) {
        return Err(CliError::Config(format!(
            "task {} does not apply to this data source (it supports {})",
            name(t),
            name(have)
        )));
    }
    if let EvalData::Rotated { observed, .. } = &exp.eval {
        if observed.rows() == 0 {
            return Err(CliError::Config("the dataset has no held-out rows".into()));
        }
    }
    let ckpt = load_checkpoint(checkpoint)?;
    check_compatible(&exp, &ckpt)?;
    exp.state = ckpt;
    let report = evaluate_experiment(&exp)?;
    if let Some(p) = svg {
        write_svg(&exp, p)?;
    }
    Ok(report)
}
