//! Builds data, initial model state, and evaluation sets from a config.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::pca::{pca_inducing, pca_scores};
use crate::config::{DataSource, ExperimentConfig, GplvmInit, InducingInit};
use crate::data::{
    build_rotated_dataset, generate_moving_ball_range, generate_toy, parse_idx, parse_idx_labels, path_factor,
    BallConfig, MovingBallVideo,
};
use crate::error::{Error, Result};
use crate::kernels::AuxiliaryData;
use crate::models::{InitInputs, ModelSpec, ModelState};
use crate::numerics::Tensor;

/// Offset separating the test-video stream from the training stream.
pub const TEST_STREAM_OFFSET: u64 = 0x7E57_0000_0000;

/// Training data of an experiment.
#[derive(Clone, Debug)]
pub enum TrainData {
    /// Fresh videos each epoch; every video is its own GP dataset over
    /// the frame times.
    MovingBall {
        render: BallConfig,
        factor: Tensor,
        seed: u64,
        per_epoch: usize,
        aux: AuxiliaryData,
    },
    /// One fixed dataset split into minibatches.
    Fixed { y: Tensor, aux: AuxiliaryData },
}

/// Held-out material used by evaluation.
#[derive(Clone, Debug)]
pub enum EvalData {
    MovingBall { videos: Vec<MovingBallVideo> },
    /// Generation targets at held-out angles: observed columns of `X*`,
    /// their objects, and the true images.
    Rotated {
        observed: Tensor,
        object_id: Vec<usize>,
        truth: Tensor,
    },
    /// True latent function at the training inputs.
    Toy { f: Tensor },
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub data: TrainData,
    pub eval: EvalData,
    pub state: ModelState,
}

impl TrainData {
    pub fn aux(&self) -> &AuxiliaryData {
        match self {
            TrainData::MovingBall { aux, .. } | TrainData::Fixed { aux, .. } => aux,
        }
    }

    /// Rows per GP dataset.
    pub fn dataset_len(&self) -> usize {
        self.aux().len()
    }

    pub fn data_dim(&self) -> usize {
        match self {
            TrainData::MovingBall { render, .. } => render.pixels(),
            TrainData::Fixed { y, .. } => y.cols(),
        }
    }
}

fn even(lo: f64, hi: f64, m: usize) -> Tensor {
    if m == 1 {
        return Tensor::scalar((lo + hi) / 2.0);
    }
    Tensor::from_fn(m, 1, |i, _| lo + (hi - lo) * i as f64 / (m - 1) as f64)
}

/// Inducing inputs on 1-d observed inputs `x`.
fn inducing_1d(x: &Tensor, m: usize, init: InducingInit) -> Tensor {
    let col = x.col_vec(0);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match init {
        InducingInit::Grid => even(lo, hi, m),
        InducingInit::Clustered => even(lo, lo + 0.1 * (hi - lo), m),
    }
}

fn resolve(base: &Path, p: &Path) -> std::path::PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds the experiment; relative data paths resolve against `base_dir`.
pub fn build_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Experiment> {
    cfg.validate()?;
    let mc = &cfg.model;
    let kind = mc.kind;
    let m = mc.inducing;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.training.seed);
    init_rng.set_stream(3);

    let (data, eval, kernel, inputs) = match cfg.data.source {
        DataSource::MovingBall => {
            let d = &cfg.data.moving_ball;
            let aux = AuxiliaryData::observed(d.render.times());
            let videos = generate_moving_ball_range(
                d.seed.wrapping_add(TEST_STREAM_OFFSET),
                0,
                d.test_videos,
                &d.render,
            )?;
            let u = kind.uses_inducing().then(|| inducing_1d(&aux.observed, m, cfg.init.inducing));
            let kernel = cfg.kernel.build(1, 0, None)?;
            (
                TrainData::MovingBall {
                    render: d.render.clone(),
                    factor: path_factor(&d.render)?,
                    seed: d.seed,
                    per_epoch: d.videos_per_epoch,
                    aux,
                },
                EvalData::MovingBall { videos },
                kernel,
                InitInputs { inducing: u, gplvm: None },
            )
        }
        DataSource::ToyRegression => {
            let t = generate_toy(&cfg.data.toy, cfg.training.seed)?;
            let aux = AuxiliaryData::observed(t.x.clone());
            let u = kind.uses_inducing().then(|| inducing_1d(&t.x, m, cfg.init.inducing));
            let kernel = cfg.kernel.build(1, 0, None)?;
            (
                TrainData::Fixed { y: t.y, aux },
                EvalData::Toy { f: t.f },
                kernel,
                InitInputs { inducing: u, gplvm: None },
            )
        }
        DataSource::RotatedDigits => {
            let r = &cfg.data.rotated;
            let images = parse_idx(&resolve(base_dir, &r.images))?;
            let labels = parse_idx_labels(&resolve(base_dir, &r.labels))?;
            let ds = build_rotated_dataset(&images, &labels, &r.build)?;
            let (p, q, dims) = (r.build.objects, r.build.angles, r.gplvm_dims);
            let gplvm = match cfg.init.gplvm {
                GplvmInit::Pca => pca_scores(&ds.objects, dims)?,
                GplvmInit::Random => {
                    let n = Normal::new(0.0, cfg.init.random_std)
                        .map_err(|e| Error::Config(format!("init.random_std: {e}")))?;
                    Tensor::from_fn(p, dims, |_, _| n.sample(&mut init_rng))
                }
            };
            let train = ds.train_rows();
            let test = ds.test_rows();
            let angle_col = |rows: &[usize]| Tensor::from_fn(rows.len(), 1, |i, _| ds.angles[rows[i]]);
            let ids = |rows: &[usize]| rows.iter().map(|&i| ds.object_id[i]).collect::<Vec<_>>();
            let mut mask = vec![true];
            mask.extend(std::iter::repeat_n(false, dims));
            let aux = AuxiliaryData::with_latent(angle_col(&train), mask, ids(&train), gplvm.clone())?;
            let u = if kind.uses_inducing() {
                if cfg.init.inducing != InducingInit::Grid {
                    return Err(Error::Config("rotated digits only support grid inducing init".into()));
                }
                if !m.is_multiple_of(q) {
                    return Err(Error::Config(format!(
                        "model.inducing = {m} must be a multiple of the {q} angles"
                    )));
                }
                let scores = if cfg.init.gplvm == GplvmInit::Pca {
                    gplvm.clone()
                } else {
                    pca_scores(&ds.objects, dims)?
                };
                Some(pca_inducing(&scores, q, m / q, &mut init_rng))
            } else {
                None
            };
            let kernel = cfg.kernel.build(1 + dims, 1, Some((p, q)))?;
            (
                TrainData::Fixed {
                    y: ds.images.select_rows(&train),
                    aux,
                },
                EvalData::Rotated {
                    observed: angle_col(&test),
                    object_id: ids(&test),
                    truth: ds.images.select_rows(&test),
                },
                kernel,
                InitInputs {
                    inducing: u,
                    gplvm: kind.uses_kernel().then_some(gplvm),
                },
            )
        }
    };
    let spec = ModelSpec {
        kind,
        data_dim: data.data_dim(),
        latent_dim: mc.latent_dim,
        encoder_hidden: mc.encoder_hidden.clone(),
        decoder_hidden: mc.decoder_hidden.clone(),
        activation: mc.activation,
        kernel,
        sigma_y2: mc.sigma_y2,
        train_sigma_y2: mc.train_sigma_y2,
        train_inducing: mc.train_inducing,
    };
    let state = ModelState::init(spec, inputs, cfg.training.seed)?;
    Ok(Experiment {
        config: cfg.clone(),
        data,
        eval,
        state,
    })
}
