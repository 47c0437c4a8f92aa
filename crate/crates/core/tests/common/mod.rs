//! Dense reference implementations and random instances shared by the
//! integration tests and the acceptance harness.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svgpvae::kernels::Kernel;
use svgpvae::numerics::Tensor;
use svgpvae::sparse_gp::LatentDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dm(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_fn(t.rows(), t.cols(), |i, j| t.get(i, j))
}

pub fn kmat(k: &Kernel, a: &Tensor, b: &Tensor) -> DMatrix<f64> {
    dm(&k.eval_tensor(a, b).unwrap())
}

/// Random 1-d latent dataset with `n` points and `l` channels; noise
/// standard deviations lie in `[sd_lo, sd_lo + 1)`.
pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, l: usize, sd_lo: f64) -> LatentDataset {
    let x = Tensor::from_fn(n, 1, |_, _| r.random_range(0.0..5.0));
    let y = Tensor::from_fn(n, l, |_, _| r.random_range(-1.5..1.5));
    let s = Tensor::from_fn(n, l, |_, _| sd_lo + r.random::<f64>());
    LatentDataset::new(x, y, s).unwrap()
}

/// Noise standard deviations times ten, i.e. precisions times 0.01.
pub fn damped(d: LatentDataset) -> LatentDataset {
    LatentDataset::new(d.x, d.y_tilde, d.sigma_tilde.map(|s| s * 10.0)).unwrap()
}

pub fn random_kernel(r: &mut ChaCha8Rng) -> Kernel {
    Kernel::rbf(1, r.random_range(0.7..2.0), r.random_range(0.5..1.5))
}

/// Evenly spread inducing inputs over `[0, 5]` with a small seeded shake.
pub fn random_inducing(r: &mut ChaCha8Rng, m: usize) -> Tensor {
    Tensor::from_fn(m, 1, |i, _| 5.0 * (i as f64 + 0.5) / m as f64 + r.random_range(-0.1..0.1))
}

fn log_gauss(y: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let ch = cov.clone().cholesky().expect("positive definite");
    let logdet = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let a = ch.solve(y);
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + y.dot(&a))
}

fn inv(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().cholesky().expect("positive definite").inverse()
}

/// `log N(y_l | 0, K_NN + diag σ̃²)`.
pub fn dense_log_z(d: &LatentDataset, k: &Kernel, l: usize) -> f64 {
    let mut c = kmat(k, &d.x, &d.x);
    for i in 0..d.len() {
        c[(i, i)] += d.sigma_tilde.get(i, l).powi(2);
    }
    log_gauss(&DVector::from_vec(d.y_tilde.col_vec(l)), &c)
}

/// Collapsed bound: `log N(y | 0, Q_NN + V) − ½ Σ k̃_ii / v_i`.
pub fn dense_titsias(d: &LatentDataset, u: &Tensor, k: &Kernel, l: usize) -> f64 {
    let kmm = kmat(k, u, u);
    let knm = kmat(k, &d.x, u);
    let q = &knm * inv(&kmm) * knm.transpose();
    let knn = kmat(k, &d.x, &d.x);
    let mut c = q.clone();
    let mut trace = 0.0;
    for i in 0..d.len() {
        let v = d.sigma_tilde.get(i, l).powi(2);
        c[(i, i)] += v;
        trace += (knn[(i, i)] - q[(i, i)]) / v;
    }
    log_gauss(&DVector::from_vec(d.y_tilde.col_vec(l)), &c) - 0.5 * trace
}

pub struct DenseEstimate {
    pub sigma: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub a: DMatrix<f64>,
}

/// Batch estimators on `rows` of `d`, scaled by `n_total / |rows|`.
pub fn dense_estimators(d: &LatentDataset, rows: &[usize], u: &Tensor, k: &Kernel, l: usize, n_total: usize) -> DenseEstimate {
    let b = d.subset(rows);
    let s = n_total as f64 / rows.len() as f64;
    let kmm = kmat(k, u, u);
    let kbm = kmat(k, &b.x, u);
    let vinv = DMatrix::from_diagonal(&DVector::from_fn(rows.len(), |i, _| 1.0 / b.sigma_tilde.get(i, l).powi(2)));
    let sigma = &kmm + s * kbm.transpose() * &vinv * &kbm;
    let si = inv(&sigma);
    let y = DVector::from_vec(b.y_tilde.col_vec(l));
    let mu = s * &kmm * &si * kbm.transpose() * &vinv * y;
    let a = &kmm * &si * &kmm;
    DenseEstimate { sigma, mu, a }
}

/// Uncollapsed bound at free `(μ, A)` on the full data.
pub fn dense_hensman(d: &LatentDataset, u: &Tensor, k: &Kernel, l: usize, mu: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    let kmm = kmat(k, u, u);
    let ki = inv(&kmm);
    let knm = kmat(k, &d.x, u);
    let knn = kmat(k, &d.x, &d.x);
    let m = u.rows() as f64;
    let mut total = 0.0;
    for i in 0..d.len() {
        let v = d.sigma_tilde.get(i, l).powi(2);
        let ki_row = knm.row(i).transpose();
        let w = &ki * &ki_row;
        let mean = w.dot(mu);
        let kt = knn[(i, i)] - ki_row.dot(&w);
        let tr = (w.transpose() * a * &w)[(0, 0)];
        let y = d.y_tilde.get(i, l);
        total += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * (y - mean).powi(2) / v - 0.5 * kt / v - 0.5 * tr / v;
    }
    let logdet = |x: &DMatrix<f64>| 2.0 * x.clone().cholesky().unwrap().l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let kl = 0.5 * ((&ki * a).trace() + mu.dot(&(&ki * mu)) - m + logdet(&kmm) - logdet(a));
    total - kl
}

/// Exact heteroscedastic GP posterior mean and covariance at `xs`.
pub fn dense_posterior(d: &LatentDataset, k: &Kernel, l: usize, xs: &Tensor) -> (DVector<f64>, DMatrix<f64>) {
    let mut c = kmat(k, &d.x, &d.x);
    for i in 0..d.len() {
        c[(i, i)] += d.sigma_tilde.get(i, l).powi(2);
    }
    let ci = inv(&c);
    let ksn = kmat(k, xs, &d.x);
    let y = DVector::from_vec(d.y_tilde.col_vec(l));
    let mean = &ksn * &ci * y;
    let cov = kmat(k, xs, xs) - &ksn * ci * ksn.transpose();
    (mean, cov)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn tensor_dm_diff(t: &Tensor, d: &DMatrix<f64>) -> f64 {
    max_abs(&(dm(t) - d))
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}
