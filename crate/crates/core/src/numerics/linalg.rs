//! Cholesky factorization with jitter escalation, triangular solves, and
//! Gaussian log-densities built on them. No routine here forms an explicit
//! inverse.

use std::f64::consts::PI;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default starting jitter for [`cholesky`].
pub const BASE_JITTER: f64 = 1e-6;
/// Number of ×10 escalations after the first jittered attempt.
pub const MAX_ESCALATIONS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    pub lower: Tensor,
    pub jitter_used: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// `log |L Lᵀ|`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn reconstruct(&self) -> Tensor {
        self.lower.matmul(&self.lower.transpose())
    }

    /// Solves `(L Lᵀ) X = B`.
    pub fn solve(&self, rhs: &Tensor) -> Tensor {
        let y = solve_lower(&self.lower, rhs);
        solve_lower_transpose(&self.lower, &y)
    }
}

/// Plain factorization attempt of `A + jitter I`; `None` if a pivot is not
/// strictly positive.
fn try_cholesky(a: &Tensor, jitter: f64) -> Option<Tensor> {
    let n = a.rows();
    let mut l = Tensor::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j) + jitter;
        for k in 0..j {
            let v = l.get(j, k);
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = 0.5 * (a.get(i, j) + a.get(j, i));
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// Factors the symmetric part of `a`, escalating diagonal jitter when the
/// plain factorization fails: first no jitter, then `base_jitter`, then up
/// to [`MAX_ESCALATIONS`] further ×10 steps.
pub fn cholesky(a: &Tensor, base_jitter: f64) -> Result<CholeskyFactor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape(format!("cholesky of non-square {:?}", a.shape())));
    }
    if !a.is_symmetric(1e-10) {
        return Err(Error::InvalidArgument("cholesky input is not symmetric".into()));
    }
    if let Some(lower) = try_cholesky(a, 0.0) {
        return Ok(CholeskyFactor {
            lower,
            jitter_used: 0.0,
        });
    }
    let mut jitter = base_jitter;
    for _ in 0..=MAX_ESCALATIONS {
        if let Some(lower) = try_cholesky(a, jitter) {
            return Ok(CholeskyFactor {
                lower,
                jitter_used: jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: jitter / 10.0,
    })
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Tensor, b: &Tensor) -> Tensor {
    let n = l.rows();
    let k = b.cols();
    let mut x = b.clone();
    for i in 0..n {
        let d = l.get(i, i);
        for c in 0..k {
            let mut s = x.get(i, c);
            for j in 0..i {
                s -= l.get(i, j) * x.get(j, c);
            }
            x.set(i, c, s / d);
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Tensor, b: &Tensor) -> Tensor {
    let n = l.rows();
    let k = b.cols();
    let mut x = b.clone();
    for i in (0..n).rev() {
        let d = l.get(i, i);
        for c in 0..k {
            let mut s = x.get(i, c);
            for j in i + 1..n {
                s -= l.get(j, i) * x.get(j, c);
            }
            x.set(i, c, s / d);
        }
    }
    x
}

/// `log N(x | mean, L Lᵀ)` for column vectors `x` and `mean`.
pub fn gauss_logpdf(x: &Tensor, mean: &Tensor, cov: &CholeskyFactor) -> Result<f64> {
    let d = cov.dim();
    if x.len() != d || mean.len() != d {
        return Err(Error::Shape(format!(
            "gauss_logpdf: x has {} entries, mean {}, covariance is {d}x{d}",
            x.len(),
            mean.len()
        )));
    }
    let diff = Tensor::column(x.data().iter().zip(mean.data()).map(|(a, b)| a - b).collect());
    let z = solve_lower(&cov.lower, &diff);
    let quad: f64 = z.data().iter().map(|v| v * v).sum();
    Ok(-0.5 * (d as f64 * (2.0 * PI).ln() + cov.logdet() + quad))
}
