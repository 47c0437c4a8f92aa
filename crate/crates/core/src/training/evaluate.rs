//! Held-out evaluation of a trained experiment.

use serde::{Deserialize, Serialize};

use super::setup::{EvalData, Experiment, TrainData};
use crate::data::{aligned_rmse, mse};
use crate::error::Result;
use crate::kernels::AuxiliaryData;
use crate::models::{conditional_generate, predict_latents, with_model_latent, ModelState};
use crate::numerics::Tensor;

pub const EVAL_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingSummary {
    /// Standard deviation of the first input column.
    pub std: f64,
    /// Smallest gap between sorted first-column locations.
    pub min_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    /// What `value` measures: `trajectory-rmse`, `generation-mse`, or
    /// `latent-rmse`.
    pub metric: String,
    pub value: f64,
    pub lengthscale: f64,
    pub inducing: Option<InducingSummary>,
}

/// Spread of 1-d inducing locations (first column of `u`).
pub fn inducing_summary(u: &Tensor) -> InducingSummary {
    let mut col = u.col_vec(0);
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    col.sort_by(f64::total_cmp);
    let min_gap = col.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    InducingSummary { std, min_gap }
}

/// Mean over videos of the aligned RMSE between latent posterior means and
/// the true ball trajectories; each video is aligned on its own.
pub fn trajectory_rmse(state: &ModelState, aux: &AuxiliaryData, videos: &[crate::data::MovingBallVideo]) -> Result<f64> {
    let mut total = 0.0;
    for v in videos {
        let z = predict_latents(state, aux, &v.frames)?;
        total += aligned_rmse(&z, &v.trajectory)?;
    }
    Ok(total / videos.len().max(1) as f64)
}

/// MSE of images generated at held-out rows against the true images.
pub fn generation_mse(
    state: &ModelState,
    aux: &AuxiliaryData,
    y: &Tensor,
    observed: &Tensor,
    object_id: &[usize],
    truth: &Tensor,
) -> Result<f64> {
    let x_star = with_model_latent(state, aux).assemble(observed, object_id)?;
    let gen = conditional_generate(state, aux, y, &x_star)?;
    mse(&gen, truth)
}

pub fn evaluate_experiment(exp: &Experiment) -> Result<EvalReport> {
    let state = &exp.state;
    let (metric, value) = match (&exp.eval, &exp.data) {
        (EvalData::MovingBall { videos }, data) => ("trajectory-rmse", trajectory_rmse(state, data.aux(), videos)?),
        (
            EvalData::Rotated {
                observed,
                object_id,
                truth,
            },
            TrainData::Fixed { y, aux },
        ) => (
            "generation-mse",
            generation_mse(state, aux, y, observed, object_id, truth)?,
        ),
        (EvalData::Toy { f }, TrainData::Fixed { y, aux }) => {
            let z = predict_latents(state, aux, y)?;
            ("latent-rmse", aligned_rmse(&z, f)?)
        }
        _ => unreachable!("evaluation data matches the training source"),
    };
    Ok(EvalReport {
        schema: EVAL_SCHEMA,
        metric: metric.into(),
        value,
        lengthscale: state.kernel().lengthscale(),
        inducing: state.inducing().filter(|u| u.cols() == 1).map(inducing_summary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_even_grid() {
        let u = Tensor::column(vec![3.0, 1.0, 2.0, 4.0]);
        let s = inducing_summary(&u);
        assert!((s.min_gap - 1.0).abs() < 1e-12);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-12);
    }
}
