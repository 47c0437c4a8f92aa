//! Value-level sparse and exact GP regression on a [`LatentDataset`].

use super::terms::{self, FreeCov, Posterior};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::numerics::{linalg, Graph, Tensor, BASE_JITTER};

/// Default cap on `N` for exact inference.
pub const EXACT_CAP: usize = 2000;

/// Per-channel regression data `{X, ỹ_l, σ̃_l}` produced by the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDataset {
    /// Auxiliary inputs, `N x D`.
    pub x: Tensor,
    /// `N x L`.
    pub y_tilde: Tensor,
    /// `N x L`, strictly positive.
    pub sigma_tilde: Tensor,
}

impl LatentDataset {
    pub fn new(x: Tensor, y_tilde: Tensor, sigma_tilde: Tensor) -> Result<Self> {
        if y_tilde.shape() != sigma_tilde.shape() || y_tilde.rows() != x.rows() {
            return Err(Error::Shape(format!(
                "x {:?}, y_tilde {:?}, sigma_tilde {:?} disagree",
                x.shape(),
                y_tilde.shape(),
                sigma_tilde.shape()
            )));
        }
        if let Some(s) = sigma_tilde.data().iter().find(|s| !(**s > 0.0)) {
            return Err(Error::InvalidArgument(format!("sigma_tilde entry {s} is not positive")));
        }
        Ok(Self { x, y_tilde, sigma_tilde })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn channels(&self) -> usize {
        self.y_tilde.cols()
    }

    pub fn y(&self, l: usize) -> Tensor {
        Tensor::column(self.y_tilde.col_vec(l))
    }

    /// `σ̃_l²` as a column.
    pub fn variance(&self, l: usize) -> Tensor {
        Tensor::column(self.sigma_tilde.col_vec(l).iter().map(|s| s * s).collect())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y_tilde: self.y_tilde.select_rows(rows),
            sigma_tilde: self.sigma_tilde.select_rows(rows),
        }
    }

    fn check_channel(&self, l: usize) -> Result<()> {
        if l >= self.channels() {
            return Err(Error::InvalidArgument(format!(
                "channel {l} out of range for {} channels",
                self.channels()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InducingPoints {
    /// `m x D`.
    pub u: Tensor,
}

impl InducingPoints {
    pub fn new(u: Tensor) -> Result<Self> {
        if u.rows() == 0 {
            return Err(Error::InvalidArgument("need at least one inducing point".into()));
        }
        Ok(Self { u })
    }

    pub fn len(&self) -> usize {
        self.u.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.u.rows() == 0
    }
}

/// `q_S`: inducing inputs plus per-channel `(μ^l, A^l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePosterior {
    pub inducing: InducingPoints,
    /// `m x L`.
    pub mu: Tensor,
    /// One `m x m` matrix per channel.
    pub a: Vec<Tensor>,
}

/// Intermediate quantities of one channel on the full data.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGpIntermediates {
    /// `Σ = K_mm + K_mN diag(σ̃⁻²) K_Nm`.
    pub sigma: Tensor,
    /// `K_Nm`.
    pub k_nm: Tensor,
    /// `Λ_i = K_mm⁻¹ k_i k_iᵀ K_mm⁻¹`.
    pub lambda: Vec<Tensor>,
    /// Diagonal of `K_NN − K_Nm K_mm⁻¹ K_mN`.
    pub k_tilde: Vec<f64>,
    /// `c = K_mN diag(σ̃⁻²) ỹ`.
    pub c: Tensor,
}

/// Batch estimates of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimates {
    pub sigma: Tensor,
    /// `m x 1`.
    pub mu: Tensor,
    pub a: Tensor,
}

/// Predictive mean and per-channel covariance at `r` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictive {
    /// `r x L`.
    pub mean: Tensor,
    /// One `r x r` covariance per channel.
    pub cov: Vec<Tensor>,
}

/// `log Z^l = log N(ỹ_l | 0, K_NN + diag(σ̃_l²))`.
pub fn exact_log_marginal(data: &LatentDataset, kernel: &Kernel, channel: usize) -> Result<f64> {
    exact_log_marginal_capped(data, kernel, channel, EXACT_CAP)
}

pub fn exact_log_marginal_capped(data: &LatentDataset, kernel: &Kernel, channel: usize, cap: usize) -> Result<f64> {
    data.check_channel(channel)?;
    if data.len() > cap {
        return Err(Error::CapExceeded { n: data.len(), cap });
    }
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let x = g.constant(data.x.clone());
    let y = g.constant(data.y(channel));
    let v = g.constant(data.variance(channel));
    let e = terms::exact_gp(&mut g, kernel, &kv, x, y, v)?;
    Ok(g.scalar(e.log_z))
}

/// Heteroscedastic GP posterior at `x_test`, for every channel.
pub fn exact_posterior(data: &LatentDataset, kernel: &Kernel, x_test: &Tensor) -> Result<Predictive> {
    if data.len() > EXACT_CAP {
        return Err(Error::CapExceeded {
            n: data.len(),
            cap: EXACT_CAP,
        });
    }
    let r = x_test.rows();
    let krr = sym_kernel(kernel, x_test)?;
    let channels = data.channels();
    if data.is_empty() {
        return Ok(Predictive {
            mean: Tensor::zeros(r, channels),
            cov: vec![krr; channels],
        });
    }
    let knn = sym_kernel(kernel, &data.x)?;
    let krn = kernel.eval_tensor(x_test, &data.x)?;
    let mut mean = Tensor::zeros(r, channels);
    let mut cov = Vec::with_capacity(channels);
    for l in 0..channels {
        let var = data.variance(l);
        let mut kn = knn.clone();
        for i in 0..data.len() {
            kn.set(i, i, kn.get(i, i) + var.data()[i]);
        }
        let f = linalg::cholesky(&kn, BASE_JITTER)?;
        let alpha = f.solve(&data.y(l));
        let m = krn.matmul(&alpha);
        for i in 0..r {
            mean.set(i, l, m.get(i, 0));
        }
        let w = linalg::solve_lower(&f.lower, &krn.transpose());
        let mut c = krr.clone();
        crate::numerics::tensor::gemm(-1.0, &w, true, &w, false, 1.0, &mut c);
        cov.push(c);
    }
    Ok(Predictive { mean, cov })
}

fn sym_kernel(kernel: &Kernel, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let xv = g.constant(x.clone());
    let k = kernel.eval_sym(&mut g, &kv, xv)?;
    Ok(g.value(k).clone())
}

/// Batch estimators `(Σ_b, μ_b, A_b)` with data terms scaled by
/// `n_total / b`.
pub fn mc_estimators(
    batch: &LatentDataset,
    inducing: &InducingPoints,
    kernel: &Kernel,
    channel: usize,
    n_total: usize,
) -> Result<McEstimates> {
    batch.check_channel(channel)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch is empty".into()));
    }
    let scale = n_total as f64 / batch.len() as f64;
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let u = g.constant(inducing.u.clone());
    let ctx = terms::inducing_context(&mut g, kernel, &kv, u)?;
    let x = g.constant(batch.x.clone());
    let cross = terms::cross_cov(&mut g, &ctx, kernel, &kv, x)?;
    let y = g.constant(batch.y(channel));
    let v = g.constant(batch.variance(channel));
    let est = terms::estimator(&mut g, &ctx, &cross, y, v, scale)?;
    let post = Posterior::Estimator(est);
    let mu = post.mu(&mut g, &ctx);
    let a = post.cov(&mut g, &ctx);
    Ok(McEstimates {
        sigma: g.value(est.sigma).clone(),
        mu: g.value(mu).clone(),
        a: g.value(a).clone(),
    })
}

/// Collapsed optimum `(μ_T, A_T)` for every channel.
pub fn titsias_optimal(data: &LatentDataset, inducing: &InducingPoints, kernel: &Kernel) -> Result<SparsePosterior> {
    let m = inducing.len();
    let mut mu = Tensor::zeros(m, data.channels());
    let mut a = Vec::with_capacity(data.channels());
    for l in 0..data.channels() {
        let est = mc_estimators(data, inducing, kernel, l, data.len())?;
        for i in 0..m {
            mu.set(i, l, est.mu.get(i, 0));
        }
        a.push(est.a);
    }
    Ok(SparsePosterior {
        inducing: inducing.clone(),
        mu,
        a,
    })
}

/// Collapsed lower bound `L_T` of one channel.
pub fn titsias_elbo(data: &LatentDataset, inducing: &InducingPoints, kernel: &Kernel, channel: usize) -> Result<f64> {
    data.check_channel(channel)?;
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let u = g.constant(inducing.u.clone());
    let ctx = terms::inducing_context(&mut g, kernel, &kv, u)?;
    let x = g.constant(data.x.clone());
    let cross = terms::cross_cov(&mut g, &ctx, kernel, &kv, x)?;
    let y = g.constant(data.y(channel));
    let v = g.constant(data.variance(channel));
    let est = terms::estimator(&mut g, &ctx, &cross, y, v, 1.0)?;
    let lt = terms::titsias_bound(&mut g, &ctx, &cross, &est, y, v);
    Ok(g.scalar(lt))
}

/// Decomposable bound `L_H` on a batch, data sum scaled by `n_total / b`
/// and the KL counted once.
pub fn hensman_elbo(
    batch: &LatentDataset,
    post: &SparsePosterior,
    kernel: &Kernel,
    channel: usize,
    n_total: usize,
) -> Result<f64> {
    batch.check_channel(channel)?;
    if batch.is_empty() {
        return Err(Error::InvalidArgument("batch is empty".into()));
    }
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let u = g.constant(post.inducing.u.clone());
    let ctx = terms::inducing_context(&mut g, kernel, &kv, u)?;
    let x = g.constant(batch.x.clone());
    let cross = terms::cross_cov(&mut g, &ctx, kernel, &kv, x)?;
    let mu = g.constant(Tensor::column(post.mu.col_vec(channel)));
    let a = g.constant(post.a[channel].clone());
    let p = Posterior::Free {
        mu,
        cov: FreeCov::Matrix(a),
    };
    let y = g.constant(batch.y(channel));
    let v = g.constant(batch.variance(channel));
    let scale = n_total as f64 / batch.len() as f64;
    let lh = terms::hensman_bound(&mut g, &ctx, &cross, &p, y, v, scale)?;
    Ok(g.scalar(lh))
}

/// `KL(N(μ^l, A^l) ‖ N(0, K_mm))` for one channel.
pub fn inducing_kl(post: &SparsePosterior, kernel: &Kernel, channel: usize) -> Result<f64> {
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let u = g.constant(post.inducing.u.clone());
    let ctx = terms::inducing_context(&mut g, kernel, &kv, u)?;
    let mu = g.constant(Tensor::column(post.mu.col_vec(channel)));
    let a = g.constant(post.a[channel].clone());
    let p = Posterior::Free {
        mu,
        cov: FreeCov::Matrix(a),
    };
    let kl = p.kl(&mut g, &ctx)?;
    Ok(g.scalar(kl))
}

/// Sparse predictive `q_S(f(X_r))` per channel.
pub fn sparse_predict(post: &SparsePosterior, kernel: &Kernel, x_r: &Tensor) -> Result<Predictive> {
    let u = &post.inducing.u;
    let kmm = sym_kernel(kernel, u)?;
    let lm = linalg::cholesky(&kmm, BASE_JITTER)?;
    let kmr = kernel.eval_tensor(u, x_r)?;
    let krr = sym_kernel(kernel, x_r)?;
    // C = K_mm⁻¹ K_mr
    let c = lm.solve(&kmr);
    let mean = c.transpose().matmul(&post.mu);
    let mut base = krr;
    crate::numerics::tensor::gemm(-1.0, &kmr, true, &c, false, 1.0, &mut base);
    let cov = post
        .a
        .iter()
        .map(|a| {
            let mut cv = base.clone();
            let ac = a.matmul(&c);
            crate::numerics::tensor::gemm(1.0, &c, true, &ac, false, 1.0, &mut cv);
            cv
        })
        .collect();
    Ok(Predictive { mean, cov })
}

/// Explicit per-point quantities of one channel on the full data.
pub fn intermediates(
    data: &LatentDataset,
    inducing: &InducingPoints,
    kernel: &Kernel,
    channel: usize,
) -> Result<SparseGpIntermediates> {
    data.check_channel(channel)?;
    let u = &inducing.u;
    let kmm = sym_kernel(kernel, u)?;
    let lm = linalg::cholesky(&kmm, BASE_JITTER)?;
    let k_nm = kernel.eval_tensor(&data.x, u)?;
    let var = data.variance(channel);
    let y = data.y(channel);
    let n = data.len();
    let wk = Tensor::from_fn(n, u.rows(), |i, j| k_nm.get(i, j) / var.data()[i]);
    let mut sigma = kmm.clone();
    crate::numerics::tensor::gemm(1.0, &k_nm, true, &wk, false, 1.0, &mut sigma);
    let wy = Tensor::from_fn(n, 1, |i, _| y.data()[i] / var.data()[i]);
    let c = k_nm.transpose().matmul(&wy);
    let kinv_kmn = lm.solve(&k_nm.transpose());
    let mut g = Graph::new();
    let kv = kernel.bind(&mut g);
    let xv = g.constant(data.x.clone());
    let kd = kernel.eval_diag(&mut g, &kv, xv)?;
    let kdiag = g.value(kd).clone();
    let mut lambda = Vec::with_capacity(n);
    let mut k_tilde = Vec::with_capacity(n);
    for i in 0..n {
        let ci = Tensor::column(kinv_kmn.col_vec(i));
        lambda.push(ci.matmul(&ci.transpose()));
        let q: f64 = k_nm.row(i).iter().zip(ci.data()).map(|(a, b)| a * b).sum();
        k_tilde.push(kdiag.data()[i] - q);
    }
    Ok(SparseGpIntermediates {
        sigma,
        k_nm,
        lambda,
        k_tilde,
        c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn toy(n: usize, l: usize, seed: u64) -> LatentDataset {
        let mut s = seed as f64 + 0.5;
        let mut next = || {
            s = (s * 12.9898 + 78.233).sin() * 43758.5453;
            s - s.floor()
        };
        let x = Tensor::from_fn(n, 1, |_, _| next() * 4.0);
        let y = Tensor::from_fn(n, l, |_, _| next() * 2.0 - 1.0);
        let st = Tensor::from_fn(n, l, |_, _| 0.3 + next());
        LatentDataset::new(x, y, st).unwrap()
    }

    #[test]
    fn one_point_marginal() {
        let k = Kernel::rbf(1, 1.0, 2.0);
        let d = LatentDataset::new(Tensor::scalar(0.3), Tensor::scalar(0.0), Tensor::scalar(0.5)).unwrap();
        let v = exact_log_marginal(&d, &k, 0).unwrap();
        assert!((v + 0.5 * (2.0 * PI * 2.25).ln()).abs() < 1e-14);
    }

    #[test]
    fn cap_is_enforced() {
        let d = toy(5, 1, 1);
        let k = Kernel::rbf(1, 1.0, 1.0);
        assert!(matches!(
            exact_log_marginal_capped(&d, &k, 0, 4),
            Err(Error::CapExceeded { n: 5, cap: 4 })
        ));
    }

    #[test]
    fn empty_data_gives_prior() {
        let k = Kernel::rbf(1, 1.0, 1.5);
        let d = LatentDataset::new(Tensor::zeros(0, 1), Tensor::zeros(0, 2), Tensor::zeros(0, 2)).unwrap();
        let xt = Tensor::column(vec![0.0, 1.0]);
        let p = exact_posterior(&d, &k, &xt).unwrap();
        assert_eq!(p.mean.max_abs(), 0.0);
        assert!(p.cov[1].max_abs_diff(&k.eval_tensor(&xt, &xt).unwrap()) < 1e-15);
    }

    #[test]
    fn zero_data_gives_zero_mean() {
        let mut d = toy(6, 1, 3);
        d.y_tilde = Tensor::zeros(6, 1);
        let u = InducingPoints::new(Tensor::column(vec![0.5, 2.5])).unwrap();
        let k = Kernel::rbf(1, 1.0, 1.0);
        let e = mc_estimators(&d, &u, &k, 0, 6).unwrap();
        assert_eq!(e.mu.max_abs(), 0.0);
    }

    #[test]
    fn huge_noise_recovers_prior() {
        let mut d = toy(5, 1, 4);
        d.sigma_tilde = Tensor::full(5, 1, 1e6);
        let u = InducingPoints::new(Tensor::column(vec![0.5, 2.5])).unwrap();
        let k = Kernel::rbf(1, 1.0, 1.0);
        let p = titsias_optimal(&d, &u, &k).unwrap();
        let kmm = k.eval_tensor(&u.u, &u.u).unwrap();
        assert!(p.mu.max_abs() < 1e-9);
        assert!(p.a[0].max_abs_diff(&kmm) < 1e-9);
    }

    #[test]
    fn full_batch_hensman_equals_titsias() {
        let d = toy(7, 2, 5);
        let u = InducingPoints::new(Tensor::column(vec![0.3, 1.6, 3.1])).unwrap();
        let k = Kernel::rbf(1, 0.9, 1.2);
        let p = titsias_optimal(&d, &u, &k).unwrap();
        for l in 0..2 {
            let lt = titsias_elbo(&d, &u, &k, l).unwrap();
            let lh = hensman_elbo(&d, &p, &k, l, 7).unwrap();
            assert!((lt - lh).abs() < 1e-8, "{lt} {lh}");
        }
    }

    #[test]
    fn prior_posterior_has_zero_kl() {
        let u = InducingPoints::new(Tensor::column(vec![0.0, 0.7, 1.9])).unwrap();
        let k = Kernel::rbf(1, 1.1, 0.8);
        let kmm = k.eval_tensor(&u.u, &u.u).unwrap();
        let p = SparsePosterior {
            inducing: u,
            mu: Tensor::zeros(3, 1),
            a: vec![kmm],
        };
        assert!(inducing_kl(&p, &k, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn predict_at_inducing_sites_is_self_consistent() {
        let u = InducingPoints::new(Tensor::column(vec![0.0, 0.7, 1.9])).unwrap();
        let k = Kernel::rbf(1, 1.1, 0.8);
        let kmm = k.eval_tensor(&u.u, &u.u).unwrap();
        let mu = Tensor::column(vec![0.4, -1.0, 2.0]);
        let p = SparsePosterior {
            inducing: u.clone(),
            mu: mu.clone(),
            a: vec![kmm.clone()],
        };
        let pr = sparse_predict(&p, &k, &u.u).unwrap();
        assert!(pr.mean.max_abs_diff(&mu) < 1e-10);
        assert!(pr.cov[0].max_abs_diff(&kmm) < 1e-10);
    }

    #[test]
    fn schur_diagonal_nonnegative() {
        let d = toy(9, 1, 8);
        let u = InducingPoints::new(Tensor::column(vec![0.2, 1.0, 2.2, 3.5])).unwrap();
        let k = Kernel::rbf(1, 0.6, 1.0);
        let it = intermediates(&d, &u, &k, 0).unwrap();
        assert!(it.k_tilde.iter().all(|v| *v >= -1e-8));
        assert_eq!(it.lambda.len(), 9);
    }
}
