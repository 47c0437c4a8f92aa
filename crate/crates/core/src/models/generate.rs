//! Value-level encoding, latent posteriors, and conditional generation.

use super::objectives::encoder_outputs;
use super::state::{ModelKind, ModelState};
use crate::error::{Error, Result};
use crate::kernels::AuxiliaryData;
use crate::numerics::{Graph, Tensor};
use crate::sparse_gp::{self, InducingPoints, LatentDataset, SparsePosterior};

/// Rows encoded per graph when mapping a whole dataset.
pub const ENCODE_CHUNK: usize = 512;

/// `(ỹ, σ̃)`, each `n x L`.
pub fn encode(state: &ModelState, y: &Tensor) -> Result<(Tensor, Tensor)> {
    if !state.spec.kind.has_encoder() {
        return Err(Error::InvalidArgument("model has no encoder".into()));
    }
    let l = state.spec.latent_dim;
    let n = y.rows();
    let mut mean = Tensor::zeros(n, l);
    let mut sd = Tensor::zeros(n, l);
    let mut start = 0;
    while start < n {
        let len = ENCODE_CHUNK.min(n - start);
        let rows: Vec<usize> = (start..start + len).collect();
        let mut g = Graph::new();
        let bound = state.bind(&mut g);
        let yv = g.constant(y.select_rows(&rows));
        let (m, v) = encoder_outputs(&mut g, &bound, l, yv)?;
        for i in 0..len {
            for c in 0..l {
                mean.set(start + i, c, g.value(m).get(i, c));
                sd.set(start + i, c, g.value(v).get(i, c).sqrt());
            }
        }
        start += len;
    }
    Ok((mean, sd))
}

/// `ψ(z)` for `z` of shape `n x L`.
pub fn decode(state: &ModelState, z: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let bound = state.bind(&mut g);
    let zv = g.constant(z.clone());
    let out = bound.decoder.forward(&mut g, zv);
    g.value(out).clone()
}

/// `aux` with the model's current GP-LVM vectors.
pub fn with_model_latent(state: &ModelState, aux: &AuxiliaryData) -> AuxiliaryData {
    let mut a = aux.clone();
    if let Some(lat) = state.gplvm() {
        a.latent = Some(lat.clone());
    }
    a
}

/// Encoded latent dataset over all rows of `aux`.
pub fn latent_dataset(state: &ModelState, aux: &AuxiliaryData, y: &Tensor) -> Result<LatentDataset> {
    let (m, s) = encode(state, y)?;
    LatentDataset::new(with_model_latent(state, aux).dense(), m, s)
}

/// Sparse posterior from the model's own parameters (free `(μ, A)`).
pub fn free_posterior(state: &ModelState) -> Result<SparsePosterior> {
    let u = state
        .inducing()
        .ok_or_else(|| Error::InvalidArgument("model has no inducing inputs".into()))?;
    let mu = state
        .get("posterior.mu")
        .ok_or_else(|| Error::InvalidArgument("model has no free posterior".into()))?;
    let a = (0..state.spec.latent_dim)
        .map(|c| {
            let raw = state.get(&format!("posterior.cov_raw.{c}")).expect("cov raw");
            let mut g = Graph::new();
            let r = g.constant(raw.clone());
            let l = g.lower_exp_diag(r);
            let a = g.matmul_t(l, false, l, true);
            g.value(a).clone()
        })
        .collect();
    Ok(SparsePosterior {
        inducing: InducingPoints::new(u.clone())?,
        mu: mu.clone(),
        a,
    })
}

/// Posterior mean of the latent GP at `x_star` (dense auxiliary rows),
/// using all training data `(aux, y)`.
pub fn latent_posterior_mean(state: &ModelState, aux: &AuxiliaryData, y: &Tensor, x_star: &Tensor) -> Result<Tensor> {
    let l = state.spec.latent_dim;
    if x_star.rows() == 0 {
        return Ok(Tensor::zeros(0, l));
    }
    let kernel = state.kernel();
    match state.spec.kind {
        ModelKind::PlainVae => Ok(Tensor::zeros(x_star.rows(), l)),
        ModelKind::LphDiagnostic | ModelKind::DeepSvigp => {
            Ok(sparse_gp::sparse_predict(&free_posterior(state)?, &kernel, x_star)?.mean)
        }
        ModelKind::Pearce => {
            let data = latent_dataset(state, aux, y)?;
            Ok(sparse_gp::exact_posterior(&data, &kernel, x_star)?.mean)
        }
        ModelKind::Svgpvae | ModelKind::Lpt => {
            let data = latent_dataset(state, aux, y)?;
            let u = InducingPoints::new(state.inducing().expect("inducing").clone())?;
            let post = sparse_gp::titsias_optimal(&data, &u, &kernel)?;
            Ok(sparse_gp::sparse_predict(&post, &kernel, x_star)?.mean)
        }
    }
}

/// Latent posterior means at the training inputs themselves, `n x L`.
/// The plain VAE has no GP, so its encoder means are returned instead.
pub fn predict_latents(state: &ModelState, aux: &AuxiliaryData, y: &Tensor) -> Result<Tensor> {
    if state.spec.kind == ModelKind::PlainVae {
        return Ok(encode(state, y)?.0);
    }
    let x = with_model_latent(state, aux).dense();
    latent_posterior_mean(state, aux, y, &x)
}

/// Pools the training set into the latent posterior, predicts at `x_star`,
/// and decodes the predictive mean.
pub fn conditional_generate(state: &ModelState, aux: &AuxiliaryData, y: &Tensor, x_star: &Tensor) -> Result<Tensor> {
    if x_star.rows() == 0 {
        return Ok(Tensor::zeros(0, state.spec.data_dim));
    }
    let z = latent_posterior_mean(state, aux, y, x_star)?;
    Ok(decode(state, &z))
}
