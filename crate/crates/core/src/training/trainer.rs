//! The training loop and its run log.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::geco::Geco;
use super::setup::{Experiment, TrainData};
use crate::data::generate_video;
use crate::error::{Error, Result};
use crate::models::{self, objective, Batch, Bound, ModelKind, ModelState};
use crate::numerics::{Graph, Tensor};
use crate::sparse_gp::{bias_trajectory, mc_estimators, titsias_optimal, EpochBias, InducingPoints};

pub const RUNLOG_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    /// The model's own objective (the ELBO), whatever was optimized.
    pub objective: f64,
    pub recon: f64,
    pub cross_entropy: f64,
    pub gp: f64,
    /// Mean squared reconstruction error per entry.
    pub mse: f64,
    pub grad_norm: f64,
    pub lambda: Option<f64>,
    /// Cholesky factorizations that needed diagonal jitter.
    pub jitter_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_objective: f64,
    pub mean_mse: f64,
    pub lengthscale: f64,
    pub bias: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// Stopped at a non-finite value; the state is the last good one.
    Aborted { epoch: usize, step: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub schema: u32,
    pub model: ModelKind,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Largest relative error of a directional finite-difference check at
    /// the first step, when requested.
    pub grad_check: Option<f64>,
    /// Per-epoch `μ_b` and `μ_T` snapshots when bias tracking is on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<EpochBias>,
    pub status: RunStatus,
}

impl RunLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable run log") + "\n"
    }

    pub fn steps_csv(&self) -> String {
        let mut s = String::from("epoch,step,objective,recon,cross_entropy,gp,mse,grad_norm,lambda,jitter_events\n");
        for r in &self.steps {
            let lam = r.lambda.map(|l| format!("{l:e}")).unwrap_or_default();
            s += &format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}\n",
                r.epoch,
                r.step,
                r.objective,
                r.recon,
                r.cross_entropy,
                r.gp,
                r.mse,
                r.grad_norm,
                lam,
                r.jitter_events
            );
        }
        s
    }
}

/// Values read off one forward/backward pass.
struct StepOut {
    record: StepRecord,
    grads: Vec<Tensor>,
}

fn forward_backward(state: &mut ModelState, batch: &Batch, noise: &Tensor, geco: Option<&Geco>) -> Result<StepOut> {
    let mut g = Graph::new();
    let bound = state.bind_moved(&mut g);
    let out = pass(&mut g, &bound, state, batch, noise, geco);
    state.unbind(&mut g, &bound);
    out
}

fn pass(
    g: &mut Graph,
    bound: &Bound,
    state: &ModelState,
    batch: &Batch,
    noise: &Tensor,
    geco: Option<&Geco>,
) -> Result<StepOut> {
    let t = objective(g, state, bound, batch, noise)?;
    let target = match geco {
        Some(ge) => {
            // (gp − ce) − λ·(sse − b·K·κ)
            let count = (batch.len() * state.spec.data_dim) as f64;
            let reg = g.sub(t.gp, t.cross_entropy);
            let c = g.shift(t.sse, -count * ge.kappa);
            let c = g.scale(c, ge.lambda);
            g.sub(reg, c)
        }
        None => t.total,
    };
    let mut grads = g.backward(target)?;
    let grads: Vec<Tensor> = bound
        .vars
        .iter()
        .zip(&state.params)
        .map(|(v, p)| {
            if p.trainable {
                grads.take(*v)
            } else {
                Tensor::zeros(p.value.rows(), p.value.cols())
            }
        })
        .collect();
    let sse = g.scalar(t.sse);
    Ok(StepOut {
        record: StepRecord {
            epoch: 0,
            step: 0,
            objective: g.scalar(t.total),
            recon: g.scalar(t.recon),
            cross_entropy: g.scalar(t.cross_entropy),
            gp: g.scalar(t.gp),
            mse: sse / (batch.len() * state.spec.data_dim) as f64,
            grad_norm: 0.0,
            lambda: geco.map(|ge| ge.lambda),
            jitter_events: g.jitter_events(),
        },
        grads,
    })
}

/// Relative error between the directional derivative from the tape and a
/// central difference along a random unit direction.
fn directional_check(state: &ModelState, batch: &Batch, noise: &Tensor, grads: &[Tensor], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(9);
    let mut dir: Vec<Tensor> = state
        .params
        .iter()
        .map(|p| {
            if p.trainable {
                Tensor::from_fn(p.value.rows(), p.value.cols(), |_, _| StandardNormal.sample(&mut rng))
            } else {
                Tensor::zeros(p.value.rows(), p.value.cols())
            }
        })
        .collect();
    let norm = dir.iter().map(|d| d.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    for d in &mut dir {
        *d = d.scale(1.0 / norm);
    }
    let ad: f64 = grads
        .iter()
        .zip(&dir)
        .map(|(g, d)| g.data().iter().zip(d.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let h = 1e-5;
    let shifted = |s: f64| -> Result<f64> {
        let mut st = state.clone();
        for (p, d) in st.params.iter_mut().zip(&dir) {
            for (x, dv) in p.value.data_mut().iter_mut().zip(d.data()) {
                *x += s * dv;
            }
        }
        models::evaluate(&st, batch, noise)
    };
    let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
    Ok((ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-8))
}

/// Global gradient norm, rescaling to `max_norm` when above it. A
/// non-finite entry makes the norm non-finite.
fn clip(grads: &mut [Tensor], max_norm: Option<f64>) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let Some(max_norm) = max_norm else { return norm };
    if norm.is_finite() && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g = g.scale(s);
        }
    }
    norm
}

fn ascend(opt: &mut Adam, state: &mut ModelState, grads: &[Tensor]) -> Result<()> {
    let active: Vec<bool> = state.params.iter().map(|p| p.trainable).collect();
    let mut refs: Vec<&mut Tensor> = state.params.iter_mut().map(|p| &mut p.value).collect();
    opt.ascend(&mut refs, grads, &active)
}

fn non_finite(out: &StepOut, state: &ModelState) -> Option<String> {
    let r = &out.record;
    if ![r.objective, r.recon, r.cross_entropy, r.gp, r.mse].iter().all(|v| v.is_finite()) {
        return Some("objective is not finite".into());
    }
    if !r.grad_norm.is_finite() {
        let i = out.grads.iter().position(|g| !g.all_finite()).unwrap_or(0);
        return Some(format!("gradient of {} is not finite", state.params[i].name));
    }
    None
}

/// Full-data `μ_T` for the bias diagnostic.
/// Batch means `μ_b` of every batch of the epoch and the full-data `μ_T`,
/// all at the end-of-epoch parameters.
fn epoch_bias(state: &ModelState, y: &Tensor, aux: &crate::kernels::AuxiliaryData, batches: &[Vec<usize>]) -> Result<EpochBias> {
    let data = models::latent_dataset(state, aux, y)?;
    let u = InducingPoints::new(state.inducing().expect("inducing").clone())?;
    let kernel = state.kernel();
    let n = data.len();
    let batch_mu = batches
        .iter()
        .map(|rows| {
            let sub = data.subset(rows);
            let mut mu = Tensor::zeros(u.len(), data.channels());
            for l in 0..data.channels() {
                let e = mc_estimators(&sub, &u, &kernel, l, n)?;
                for i in 0..u.len() {
                    mu.set(i, l, e.mu.get(i, 0));
                }
            }
            Ok(mu)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpochBias {
        batch_mu,
        mu_t: titsias_optimal(&data, &u, &kernel)?.mu,
    })
}

/// Trains `exp.state` in place and returns the run log. On a non-finite
/// value the run stops with [`RunStatus::Aborted`] and the state left at
/// its last good values.
///
/// `on_epoch` runs after each completed epoch (1-based count) and may stop
/// the run by returning an error.
pub fn train<F>(exp: &mut Experiment, mut on_epoch: F) -> Result<RunLog>
where
    F: FnMut(usize, &ModelState, &RunLog) -> Result<()>,
{
    let cfg = exp.config.clone();
    let tc = &cfg.training;
    let kind = exp.state.spec.kind;
    let l_dim = exp.state.spec.latent_dim;
    let mut opt = Adam::new(tc.lr);
    let mut geco = cfg.geco.enabled.then(|| Geco::new(&cfg.geco));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    noise_rng.set_stream(1);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    batch_rng.set_stream(2);

    let track_bias = cfg.diagnostics.bias_tracking;
    if track_bias && (kind != ModelKind::Svgpvae || !matches!(exp.data, TrainData::Fixed { .. })) {
        return Err(Error::Config(
            "bias tracking needs the svgpvae model on a fixed dataset".into(),
        ));
    }
    let mut log = RunLog {
        schema: RUNLOG_SCHEMA,
        model: kind,
        seed: tc.seed,
        steps: Vec::new(),
        epochs: Vec::new(),
        grad_check: None,
        bias: Vec::new(),
        status: RunStatus::Completed,
    };
    let n = exp.data.dataset_len();
    let b = if tc.batch_size == 0 { n } else { tc.batch_size.min(n) };
    let mut step = 0usize;

    for epoch in 0..tc.epochs {
        let mut epoch_batches = Vec::new();
        let (mut sum_obj, mut sum_mse, mut count) = (0.0, 0.0, 0usize);
        let plan: Vec<(Option<Tensor>, Vec<usize>)> = match &exp.data {
            TrainData::MovingBall {
                render,
                factor,
                seed,
                per_epoch,
                ..
            } => (0..*per_epoch)
                .map(|i| {
                    let idx = (epoch * per_epoch + i) as u64;
                    let video = generate_video(render, factor, *seed, idx);
                    let mut rows: Vec<usize> = (0..n).collect();
                    if b < n {
                        rows.shuffle(&mut batch_rng);
                        rows.truncate(b);
                        rows.sort_unstable();
                    }
                    (Some(video.frames), rows)
                })
                .collect(),
            TrainData::Fixed { .. } => {
                let mut rows: Vec<usize> = (0..n).collect();
                if b < n {
                    rows.shuffle(&mut batch_rng);
                }
                rows.chunks(b).map(|c| (None, c.to_vec())).collect()
            }
        };
        for (frames, rows) in plan {
            let aux = exp.data.aux();
            let y = match (&frames, &exp.data) {
                (Some(f), _) => f.select_rows(&rows),
                (None, TrainData::Fixed { y, .. }) => y.select_rows(&rows),
                _ => unreachable!("moving-ball steps carry their frames"),
            };
            let batch = Batch {
                y: &y,
                aux,
                rows: &rows,
                n_total: n,
            };
            let noise = Tensor::from_fn(rows.len(), l_dim, |_, _| StandardNormal.sample(&mut noise_rng));
            let mut out = match forward_backward(&mut exp.state, &batch, &noise, geco.as_ref()) {
                Ok(o) => o,
                Err(e @ (Error::NotPositiveDefinite { .. } | Error::NonFinite(_))) => {
                    log.status = RunStatus::Aborted {
                        epoch,
                        step,
                        reason: e.to_string(),
                    };
                    return Ok(log);
                }
                Err(e) => return Err(e),
            };
            out.record.grad_norm = clip(&mut out.grads, tc.clip_norm);
            if let Some(reason) = non_finite(&out, &exp.state) {
                log.status = RunStatus::Aborted { epoch, step, reason };
                return Ok(log);
            }
            if step == 0 && cfg.diagnostics.grad_check {
                // unclipped gradients of the model objective itself
                let model_grads = forward_backward(&mut exp.state, &batch, &noise, None)?.grads;
                log.grad_check = Some(directional_check(&exp.state, &batch, &noise, &model_grads, tc.seed)?);
            }
            ascend(&mut opt, &mut exp.state, &out.grads)?;
            if let Some(ge) = geco.as_mut() {
                ge.update(out.record.mse);
            }
            if track_bias {
                epoch_batches.push(rows.clone());
            }
            out.record.epoch = epoch;
            out.record.step = step;
            sum_obj += out.record.objective;
            sum_mse += out.record.mse;
            count += 1;
            log.steps.push(out.record);
            step += 1;
        }
        let bias = if track_bias {
            let TrainData::Fixed { y, aux } = &exp.data else {
                unreachable!("checked above")
            };
            let rec = epoch_bias(&exp.state, y, aux, &epoch_batches)?;
            let b = bias_trajectory(std::slice::from_ref(&rec), false)?[0];
            log.bias.push(rec);
            Some(b)
        } else {
            None
        };
        log.epochs.push(EpochRecord {
            epoch,
            mean_objective: sum_obj / count as f64,
            mean_mse: sum_mse / count as f64,
            lengthscale: exp.state.kernel().lengthscale(),
            bias,
        });
        on_epoch(epoch + 1, &exp.state, &log)?;
    }
    Ok(log)
}
