//! Differentiable building blocks shared by every GP objective.
//!
//! Inducing covariances are never inverted. With `K_mm = L_m L_mᵀ` and the
//! per-channel `Σ = K_mm + s K_mb W K_bm = L_Σ L_Σᵀ` (`W = diag(σ̃⁻²)`), the
//! estimator posterior `A = K_mm Σ⁻¹ K_mm` has square root `K_mm L_Σ⁻ᵀ`, so
//! `Tr(A Λ_i) = ‖L_Σ⁻¹ k_i‖²` and the predictive mean is
//! `s k_iᵀ Σ⁻¹ K_mb W ỹ`.

use crate::error::Result;
use crate::kernels::{Kernel, KernelVars};
use crate::numerics::{Graph, Tensor, Var};

pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Squared column norms of `a` as an `n x 1` column.
pub fn col_sq_norms(g: &mut Graph, a: Var) -> Var {
    let sq = g.square(a);
    let s = g.sum_rows(sq);
    g.transpose(s)
}

fn frobenius_sq(g: &mut Graph, a: Var) -> Var {
    let sq = g.square(a);
    g.sum(sq)
}

fn reciprocal(g: &mut Graph, a: Var) -> Var {
    let (r, c) = g.shape(a);
    let ones = g.constant(Tensor::ones(r, c));
    g.div(ones, a)
}

/// `K_mm` and its factor, computed once per step and shared by channels.
#[derive(Clone, Copy, Debug)]
pub struct InducingContext {
    pub u: Var,
    pub kmm: Var,
    pub lm: Var,
    pub logdet_kmm: Var,
    pub m: usize,
}

pub fn inducing_context(g: &mut Graph, kernel: &Kernel, kv: &KernelVars, u: Var) -> Result<InducingContext> {
    let kmm = kernel.eval_sym(g, kv, u)?;
    let lm = g.cholesky(kmm)?;
    let logdet_kmm = g.logdet_from_chol(lm);
    Ok(InducingContext {
        u,
        kmm,
        lm,
        logdet_kmm,
        m: g.shape(u).0,
    })
}

/// Cross-covariance of a set of points with the inducing inputs.
#[derive(Clone, Copy, Debug)]
pub struct CrossCov {
    /// `K_xm`, `n x m`.
    pub kxm: Var,
    /// `L_m⁻¹ K_mx`, `m x n`.
    pub b: Var,
    /// `k(x_i, x_i)`, `n x 1`.
    pub kdiag: Var,
    /// `k̃_ii = k_ii − ‖L_m⁻¹ k_i‖²`, `n x 1`.
    pub schur: Var,
}

pub fn cross_cov(
    g: &mut Graph,
    ctx: &InducingContext,
    kernel: &Kernel,
    kv: &KernelVars,
    x: Var,
) -> Result<CrossCov> {
    let kxm = kernel.eval(g, kv, x, ctx.u)?;
    let kmx = g.transpose(kxm);
    let b = g.trisolve(ctx.lm, kmx, false);
    let kdiag = kernel.eval_diag(g, kv, x)?;
    let q = col_sq_norms(g, b);
    let schur = g.sub(kdiag, q);
    Ok(CrossCov { kxm, b, kdiag, schur })
}

/// Closed-form estimators of `(μ, A)` from one batch of one channel, with
/// data terms scaled by `scale = N/b`. `scale = 1` on the full data gives
/// the collapsed optimum.
#[derive(Clone, Copy, Debug)]
pub struct Estimator {
    pub sigma: Var,
    pub lsig: Var,
    /// `L_Σ⁻¹ K_mb W ỹ`, `m x 1` (unscaled).
    pub v: Var,
    pub logdet_sigma: Var,
    pub scale: f64,
}

pub fn estimator(
    g: &mut Graph,
    ctx: &InducingContext,
    cross: &CrossCov,
    y: Var,
    var: Var,
    scale: f64,
) -> Result<Estimator> {
    let prec = reciprocal(g, var);
    let wk = g.mul_col(cross.kxm, prec);
    let data = g.matmul_t(cross.kxm, true, wk, false);
    let data = g.scale(data, scale);
    let sigma = g.add(ctx.kmm, data);
    let lsig = g.cholesky(sigma)?;
    let wy = g.mul(prec, y);
    let c = g.matmul_t(cross.kxm, true, wy, false);
    let v = g.trisolve(lsig, c, false);
    let logdet_sigma = g.logdet_from_chol(lsig);
    Ok(Estimator {
        sigma,
        lsig,
        v,
        logdet_sigma,
        scale,
    })
}

/// Covariance of a free variational posterior.
#[derive(Clone, Copy, Debug)]
pub enum FreeCov {
    /// Lower-triangular `R` with positive diagonal and `A = R Rᵀ`.
    Root(Var),
    /// `A` itself.
    Matrix(Var),
}

/// `q_S(f_m) = N(μ, A)` for one channel.
#[derive(Clone, Copy, Debug)]
pub enum Posterior {
    Estimator(Estimator),
    Free { mu: Var, cov: FreeCov },
}

impl Posterior {
    /// Marginal mean and variance of `q_S(f(x_i))` at the points of
    /// `cross`. The variance is `k̃_ii + Tr(A Λ_i)`.
    pub fn marginals(&self, g: &mut Graph, ctx: &InducingContext, cross: &CrossCov) -> (Var, Var) {
        match *self {
            Posterior::Estimator(e) => {
                let kmx = g.transpose(cross.kxm);
                let d = g.trisolve(e.lsig, kmx, false);
                let mean = g.matmul_t(d, true, e.v, false);
                let mean = g.scale(mean, e.scale);
                let tr = col_sq_norms(g, d);
                let var = g.add(cross.schur, tr);
                (mean, var)
            }
            Posterior::Free { mu, cov } => {
                let w = g.trisolve(ctx.lm, mu, false);
                let mean = g.matmul_t(cross.b, true, w, false);
                let tr = match cov {
                    FreeCov::Root(r) => {
                        let gm = g.trisolve(ctx.lm, r, false);
                        let t = g.matmul_t(gm, true, cross.b, false);
                        col_sq_norms(g, t)
                    }
                    FreeCov::Matrix(a) => {
                        let c = g.trisolve(ctx.lm, cross.b, true);
                        let ac = g.matmul(a, c);
                        let p = g.mul(c, ac);
                        let s = g.sum_rows(p);
                        g.transpose(s)
                    }
                };
                let var = g.add(cross.schur, tr);
                (mean, var)
            }
        }
    }

    /// `KL(N(μ, A) ‖ N(0, K_mm))`.
    pub fn kl(&self, g: &mut Graph, ctx: &InducingContext) -> Result<Var> {
        let m = ctx.m as f64;
        let (trace, quad, logdet_ratio) = match *self {
            Posterior::Estimator(e) => {
                let ee = g.trisolve(e.lsig, ctx.lm, false);
                let trace = frobenius_sq(g, ee);
                let sv = g.trisolve(e.lsig, e.v, true);
                let q = g.matmul_t(ctx.lm, true, sv, false);
                let q = g.scale(q, e.scale);
                let quad = frobenius_sq(g, q);
                // log|K_mm| − log|A| = log|Σ| − log|K_mm|
                let ratio = g.sub(e.logdet_sigma, ctx.logdet_kmm);
                (trace, quad, ratio)
            }
            Posterior::Free { mu, cov } => {
                let w = g.trisolve(ctx.lm, mu, false);
                let quad = frobenius_sq(g, w);
                let (trace, logdet_a) = match cov {
                    FreeCov::Root(r) => {
                        let gm = g.trisolve(ctx.lm, r, false);
                        (frobenius_sq(g, gm), g.logdet_from_chol(r))
                    }
                    FreeCov::Matrix(a) => {
                        let h = g.trisolve(ctx.lm, a, false);
                        let ht = g.transpose(h);
                        let h2 = g.trisolve(ctx.lm, ht, false);
                        let d = g.diag(h2);
                        (g.sum(d), g.logdet(a)?)
                    }
                };
                let ratio = g.sub(ctx.logdet_kmm, logdet_a);
                (trace, quad, ratio)
            }
        };
        let s = g.add(trace, quad);
        let s = g.add(s, logdet_ratio);
        let s = g.shift(s, -m);
        Ok(g.scale(s, 0.5))
    }

    /// Inducing mean `μ`, `m x 1`.
    pub fn mu(&self, g: &mut Graph, ctx: &InducingContext) -> Var {
        match *self {
            Posterior::Estimator(e) => {
                let sv = g.trisolve(e.lsig, e.v, true);
                let mu = g.matmul(ctx.kmm, sv);
                g.scale(mu, e.scale)
            }
            Posterior::Free { mu, .. } => mu,
        }
    }

    /// Inducing covariance `A`, `m x m`.
    pub fn cov(&self, g: &mut Graph, ctx: &InducingContext) -> Var {
        match *self {
            Posterior::Estimator(e) => {
                let rt = g.trisolve(e.lsig, ctx.kmm, false);
                g.matmul_t(rt, true, rt, false)
            }
            Posterior::Free { cov: FreeCov::Root(r), .. } => g.matmul_t(r, false, r, true),
            Posterior::Free { cov: FreeCov::Matrix(a), .. } => a,
        }
    }
}

/// `E_{N(f; mean, pvar)}[log N(y | f, var)]` per row:
/// `−½ log(2π var) − ((y − mean)² + pvar) / (2 var)`. This is both the
/// per-point bracket of the decomposable bound and the closed-form
/// `E_{q_S}[log q̃(z_i | y_i)]`.
pub fn expected_gauss_loglik(g: &mut Graph, y: Var, var: Var, mean: Var, pvar: Var) -> Var {
    let d = g.sub(y, mean);
    let d2 = g.square(d);
    let num = g.add(d2, pvar);
    let q = g.div(num, var);
    let lv = g.log(var);
    let s = g.add(q, lv);
    let s = g.shift(s, LOG_2PI);
    g.scale(s, -0.5)
}

/// Decomposable bound: `scale · Σ_i bracket_i − KL`.
pub fn hensman_bound(
    g: &mut Graph,
    ctx: &InducingContext,
    cross: &CrossCov,
    post: &Posterior,
    y: Var,
    var: Var,
    scale: f64,
) -> Result<Var> {
    let (mean, pvar) = post.marginals(g, ctx, cross);
    let t = expected_gauss_loglik(g, y, var, mean, pvar);
    let s = g.sum(t);
    let s = g.scale(s, scale);
    let kl = post.kl(g, ctx)?;
    Ok(g.sub(s, kl))
}

/// Collapsed bound over the full data; `est` must have scale 1.
pub fn titsias_bound(g: &mut Graph, ctx: &InducingContext, cross: &CrossCov, est: &Estimator, y: Var, var: Var) -> Var {
    let n = g.shape(y).0 as f64;
    let lv = g.log(var);
    let sum_lv = g.sum(lv);
    let y2 = g.square(y);
    let yq = g.div(y2, var);
    let yq = g.sum(yq);
    let vq = frobenius_sq(g, est.v);
    let sq = g.div(cross.schur, var);
    let sq = g.sum(sq);
    let mut acc = g.add(sum_lv, est.logdet_sigma);
    acc = g.sub(acc, ctx.logdet_kmm);
    acc = g.add(acc, yq);
    acc = g.sub(acc, vq);
    acc = g.add(acc, sq);
    acc = g.shift(acc, n * LOG_2PI);
    g.scale(acc, -0.5)
}

/// Exact heteroscedastic GP regression on one channel.
#[derive(Clone, Copy, Debug)]
pub struct ExactGp {
    /// `log N(ỹ | 0, K + diag(σ̃²))`.
    pub log_z: Var,
    /// Posterior marginal means at the training inputs.
    pub mean: Var,
    /// Posterior marginal variances at the training inputs.
    pub var: Var,
}

pub fn exact_gp(g: &mut Graph, kernel: &Kernel, kv: &KernelVars, x: Var, y: Var, var: Var) -> Result<ExactGp> {
    let n = g.shape(x).0 as f64;
    let k = kernel.eval_sym(g, kv, x)?;
    let d = g.diag_embed(var);
    let kn = g.add(k, d);
    let l = g.cholesky(kn)?;
    let a = g.trisolve(l, y, false);
    let aq = frobenius_sq(g, a);
    let ld = g.logdet_from_chol(l);
    let s = g.add(aq, ld);
    let s = g.shift(s, n * LOG_2PI);
    let log_z = g.scale(s, -0.5);
    let w = g.trisolve(l, k, false);
    let mean = g.matmul_t(w, true, a, false);
    let kd = g.diag(k);
    let q = col_sq_norms(g, w);
    let pvar = g.sub(kd, q);
    Ok(ExactGp { log_z, mean, var: pvar })
}
