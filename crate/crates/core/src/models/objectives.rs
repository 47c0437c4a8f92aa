//! Training objectives. Each returns the scalar to maximize together with
//! its parts.

use super::state::{Bound, ModelKind, ModelState};
use crate::error::{Error, Result};
use crate::kernels::AuxiliaryData;
use crate::numerics::{Graph, Tensor, Var};
use crate::sparse_gp::terms::{self, FreeCov, Posterior, LOG_2PI};

/// Rows `rows` of a dataset of size `n_total`.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    /// Observations of the batch, `b x K`.
    pub y: &'a Tensor,
    pub aux: &'a AuxiliaryData,
    pub rows: &'a [usize],
    pub n_total: usize,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn ratio(&self) -> f64 {
        self.len() as f64 / self.n_total as f64
    }
}

/// Objective parts on the graph. `total = recon − cross_entropy + gp`
/// except for the deep SVIGP baseline, whose `gp` also holds the
/// variance penalty of its expected likelihood.
#[derive(Clone, Debug)]
pub struct Terms {
    pub total: Var,
    /// `Σ_i E[log p_ψ(y_i | z_i)]` from one sample.
    pub recon: Var,
    /// `Σ_i Σ_l E[log q̃_φ(z_i^l | y_i)]`, zero where the objective has no
    /// such term.
    pub cross_entropy: Var,
    /// GP part: log marginals, scaled bounds, or negative KL terms.
    pub gp: Var,
    /// `‖Y − ψ(z)‖²`.
    pub sse: Var,
    /// Batch estimates `μ_b^l` (`m x 1` each) for the sparse GP-VAE.
    pub mu_b: Vec<Var>,
}

/// Encoder means and variances, each `n x L`.
pub fn encoder_outputs(g: &mut Graph, bound: &Bound, latent_dim: usize, y: Var) -> Result<(Var, Var)> {
    let enc = bound
        .encoder
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model has no encoder".into()))?;
    let out = enc.forward(g, y);
    let mean = g.slice_cols(out, 0, latent_dim);
    let logvar = g.slice_cols(out, latent_dim, latent_dim);
    let var = g.exp(logvar);
    Ok((mean, var))
}

fn gaussian_recon(g: &mut Graph, bound: &Bound, y: Var, z: Var) -> (Var, Var) {
    let (n, k) = g.shape(y);
    let out = bound.decoder.forward(g, z);
    let d = g.sub(y, out);
    let d2 = g.square(d);
    let sse = g.sum(d2);
    let inv = g.neg(bound.log_sigma_y2);
    let inv = g.exp(inv);
    let q = g.scale_by(sse, inv);
    let lv = g.scale(bound.log_sigma_y2, (n * k) as f64);
    let s = g.add(q, lv);
    let s = g.shift(s, (n * k) as f64 * LOG_2PI);
    (g.scale(s, -0.5), sse)
}

fn sample(g: &mut Graph, mean: Var, var: Var, eps: Var) -> Var {
    let sd = g.sqrt(var);
    let e = g.mul(sd, eps);
    g.add(mean, e)
}

fn check_batch(state: &ModelState, batch: &Batch, noise: &Tensor) -> Result<()> {
    let l = state.spec.latent_dim;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.y.rows() != batch.len() || batch.y.cols() != state.spec.data_dim {
        return Err(Error::Shape(format!(
            "batch observations {:?} for {} rows of dimension {}",
            batch.y.shape(),
            batch.len(),
            state.spec.data_dim
        )));
    }
    if noise.rows() != batch.len() || noise.cols() != l {
        return Err(Error::Shape(format!(
            "noise {:?}, expected {}x{l}",
            noise.shape(),
            batch.len()
        )));
    }
    if state.spec.kind.full_batch_only() && batch.len() != batch.n_total {
        return Err(Error::InvalidArgument(format!(
            "{:?} needs the full dataset in one batch",
            state.spec.kind
        )));
    }
    if let Some(&r) = batch.rows.iter().find(|&&r| r >= batch.aux.len()) {
        return Err(Error::Shape(format!("row {r} outside auxiliary data")));
    }
    Ok(())
}

/// Objective of `state.spec.kind` on one batch with standard-normal draws
/// `noise` (`b x L`).
pub fn objective(g: &mut Graph, state: &ModelState, bound: &Bound, batch: &Batch, noise: &Tensor) -> Result<Terms> {
    check_batch(state, batch, noise)?;
    let kind = state.spec.kind;
    let l_dim = state.spec.latent_dim;
    let kernel = state.kernel();
    let kv = &bound.kernel;
    let y = g.constant(batch.y.clone());
    let eps = g.constant(noise.clone());
    let zero = g.constant_scalar(0.0);

    let x = if kind.uses_kernel() {
        Some(batch.aux.rows_var(g, bound.gplvm, batch.rows)?)
    } else {
        None
    };
    let enc = if kind.has_encoder() && kind != ModelKind::LphDiagnostic {
        Some(encoder_outputs(g, bound, l_dim, y)?)
    } else {
        None
    };
    let ctx = if kind.uses_inducing() {
        let u = bound
            .inducing
            .ok_or_else(|| Error::InvalidArgument("model has no inducing inputs".into()))?;
        Some(terms::inducing_context(g, &kernel, kv, u)?)
    } else {
        None
    };
    let cross = match (ctx, x) {
        (Some(c), Some(x)) => Some(terms::cross_cov(g, &c, &kernel, kv, x)?),
        _ => None,
    };

    let mut means = Vec::with_capacity(l_dim);
    let mut pvars = Vec::with_capacity(l_dim);
    let mut ce = zero;
    let mut gp = zero;
    let mut mu_b = Vec::new();
    let ratio = batch.ratio();
    let scale = 1.0 / ratio;

    for c in 0..l_dim {
        let enc_c = enc.map(|(m, v)| (g.col(m, c), g.col(v, c)));
        let (mean, pvar) = match kind {
            ModelKind::Pearce => {
                let (yt, vt) = enc_c.expect("encoder");
                let e = terms::exact_gp(g, &kernel, kv, x.expect("inputs"), yt, vt)?;
                let t = terms::expected_gauss_loglik(g, yt, vt, e.mean, e.var);
                let t = g.sum(t);
                ce = g.add(ce, t);
                gp = g.add(gp, e.log_z);
                (e.mean, e.var)
            }
            ModelKind::Svgpvae | ModelKind::Lpt => {
                let (ctx, cross) = (ctx.expect("inducing"), cross.expect("cross"));
                let (yt, vt) = enc_c.expect("encoder");
                let s = if kind == ModelKind::Lpt { 1.0 } else { scale };
                let est = terms::estimator(g, &ctx, &cross, yt, vt, s)?;
                let post = Posterior::Estimator(est);
                let (mean, pvar) = post.marginals(g, &ctx, &cross);
                let t = terms::expected_gauss_loglik(g, yt, vt, mean, pvar);
                let t = g.sum(t);
                ce = g.add(ce, t);
                let part = if kind == ModelKind::Lpt {
                    terms::titsias_bound(g, &ctx, &cross, &est, yt, vt)
                } else {
                    let kl = post.kl(g, &ctx)?;
                    let data = g.scale(t, scale);
                    let lh = g.sub(data, kl);
                    mu_b.push(post.mu(g, &ctx));
                    g.scale(lh, ratio)
                };
                gp = g.add(gp, part);
                (mean, pvar)
            }
            ModelKind::LphDiagnostic | ModelKind::DeepSvigp => {
                let (ctx, cross) = (ctx.expect("inducing"), cross.expect("cross"));
                let mu_all = bound.mu.expect("free mean");
                let mu = g.col(mu_all, c);
                let r = g.lower_exp_diag(bound.cov_raw[c]);
                let post = Posterior::Free {
                    mu,
                    cov: FreeCov::Root(r),
                };
                let (mean, pvar) = post.marginals(g, &ctx, &cross);
                let kl = post.kl(g, &ctx)?;
                let kl = g.scale(kl, ratio);
                gp = g.sub(gp, kl);
                (mean, pvar)
            }
            ModelKind::PlainVae => {
                let (yt, vt) = enc_c.expect("encoder");
                // KL(N(ỹ, σ̃²) ‖ N(0, 1))
                let m2 = g.square(yt);
                let lv = g.log(vt);
                let s = g.add(vt, m2);
                let s = g.sub(s, lv);
                let s = g.shift(s, -1.0);
                let s = g.sum(s);
                let kl = g.scale(s, 0.5);
                gp = g.sub(gp, kl);
                (yt, vt)
            }
        };
        means.push(mean);
        pvars.push(pvar);
    }

    if kind == ModelKind::DeepSvigp {
        let m = g.concat_cols(&means);
        let (recon, sse) = gaussian_recon(g, bound, y, m);
        let pv = g.concat_cols(&pvars);
        let pv = g.sum(pv);
        let inv = g.neg(bound.log_sigma_y2);
        let inv = g.exp(inv);
        let pen = g.scale_by(pv, inv);
        let pen = g.scale(pen, 0.5);
        gp = g.sub(gp, pen);
        let total = g.add(recon, gp);
        return Ok(Terms {
            total,
            recon,
            cross_entropy: ce,
            gp,
            sse,
            mu_b,
        });
    }

    let zs: Vec<Var> = (0..l_dim)
        .map(|c| {
            let e = g.col(eps, c);
            sample(g, means[c], pvars[c], e)
        })
        .collect();
    let z = if zs.len() == 1 { zs[0] } else { g.concat_cols(&zs) };
    let (recon, sse) = gaussian_recon(g, bound, y, z);
    let t = g.sub(recon, ce);
    let total = g.add(t, gp);
    Ok(Terms {
        total,
        recon,
        cross_entropy: ce,
        gp,
        sse,
        mu_b,
    })
}

/// Objective value and gradients, one gradient per entry of
/// `state.params` (zeros for constants).
pub fn value_and_grads(state: &ModelState, batch: &Batch, noise: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let bound = state.bind(&mut g);
    let t = objective(&mut g, state, &bound, batch, noise)?;
    let mut grads = g.backward(t.total)?;
    let out = bound
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
    Ok((g.scalar(t.total), out))
}

/// Objective value only.
pub fn evaluate(state: &ModelState, batch: &Batch, noise: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let bound = state.bind(&mut g);
    let t = objective(&mut g, state, &bound, batch, noise)?;
    Ok(g.scalar(t.total))
}

/// Evaluates `state` as if it were of kind `kind`; parameters the other
/// objective lacks are ignored.
pub fn evaluate_as(state: &ModelState, kind: ModelKind, batch: &Batch, noise: &Tensor) -> Result<f64> {
    let mut s = state.clone();
    s.spec.kind = kind;
    evaluate(&s, batch, noise)
}

#[cfg(test)]
mod tests {
    use super::super::state::{fixtures::spec, InitInputs};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn setup(kind: ModelKind, n: usize) -> (ModelState, AuxiliaryData, Tensor, Tensor) {
        let x = Tensor::from_fn(n, 1, |i, _| i as f64 * 0.7);
        let aux = AuxiliaryData::observed(x.clone());
        let u = Tensor::column(vec![0.3, 1.5, 2.9]);
        let state = ModelState::init(
            spec(kind, 4, 2, 1),
            InitInputs {
                inducing: Some(u),
                gplvm: None,
            },
            3,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = Tensor::from_fn(n, 4, |i, j| ((i + 2 * j) as f64 * 0.9).sin());
        let noise = Tensor::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        (state, aux, y, noise)
    }

    #[test]
    fn every_kind_evaluates_finite() {
        for kind in [
            ModelKind::Pearce,
            ModelKind::Svgpvae,
            ModelKind::Lpt,
            ModelKind::LphDiagnostic,
            ModelKind::DeepSvigp,
            ModelKind::PlainVae,
        ] {
            let (s, aux, y, noise) = setup(kind, 5);
            let rows: Vec<usize> = (0..5).collect();
            let b = Batch {
                y: &y,
                aux: &aux,
                rows: &rows,
                n_total: 5,
            };
            let (v, grads) = value_and_grads(&s, &b, &noise).unwrap();
            assert!(v.is_finite(), "{kind:?}");
            assert_eq!(grads.len(), s.params.len());
        }
    }

    #[test]
    fn full_batch_only_kinds_reject_minibatch() {
        let (s, aux, y, noise) = setup(ModelKind::Pearce, 5);
        let rows = [0, 1];
        let yb = y.select_rows(&rows);
        let b = Batch {
            y: &yb,
            aux: &aux,
            rows: &rows,
            n_total: 5,
        };
        assert!(evaluate(&s, &b, &noise.select_rows(&rows)).is_err());
    }

    #[test]
    fn full_batch_svgpvae_equals_lpt() {
        let (s, aux, y, noise) = setup(ModelKind::Svgpvae, 6);
        let rows: Vec<usize> = (0..6).collect();
        let b = Batch {
            y: &y,
            aux: &aux,
            rows: &rows,
            n_total: 6,
        };
        let a = evaluate(&s, &b, &noise).unwrap();
        let t = evaluate_as(&s, ModelKind::Lpt, &b, &noise).unwrap();
        assert!((a - t).abs() < 1e-8, "{a} {t}");
    }
}
