//! Kronecker low-rank form of the product periodic × linear kernel over a
//! grid of `P` objects and `Q` views: `K_NN = P Pᵀ ⊗ K(Q) = V Vᵀ` with
//! `V = P ⊗ L`, `L = chol K(Q)`. Rows are ordered object-major
//! (`row = p·Q + q`).

use nalgebra::{DMatrix, SymmetricEigen};

use super::kernel::{Kernel, KernelKind};
use crate::error::{Error, Result};
use crate::numerics::{linalg, Tensor, BASE_JITTER};

#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactor {
    /// `N x H` with `N = P·Q`, `H = Q·p₁`.
    pub v: Tensor,
    /// Object matrix, `P x p₁`.
    pub objects: Tensor,
    /// Square-root factor `L` of `K(Q)` with `L Lᵀ = K(Q)`, `Q x Q`.
    /// Lower-triangular unless `K(Q)` is singular.
    pub view_chol: Tensor,
}

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.v.cols()
    }

    pub fn len(&self) -> usize {
        self.v.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.v.rows() == 0
    }
}

/// Dense auxiliary rows matching the factor's ordering: row `p·Q + q` is
/// `[views[q] | objects[p]]`.
pub fn kronecker_inputs(objects: &Tensor, views: &Tensor) -> Tensor {
    let (np, nq) = (objects.rows(), views.rows());
    let (dv, dobj) = (views.cols(), objects.cols());
    Tensor::from_fn(np * nq, dv + dobj, |i, j| {
        let (p, q) = (i / nq, i % nq);
        if j < dv {
            views.get(q, j)
        } else {
            objects.get(p, j - dv)
        }
    })
}

pub fn build_low_rank(kernel: &Kernel, objects: &Tensor, views: &Tensor) -> Result<LowRankFactor> {
    let view_dims = match kernel.kind {
        KernelKind::ProductPeriodicLinear { view_dims }
        | KernelKind::LowRankKronecker { view_dims, .. } => view_dims,
        _ => {
            return Err(Error::InvalidArgument(
                "low-rank factor needs the product periodic-linear kernel".into(),
            ))
        }
    };
    if views.cols() != view_dims || objects.cols() + view_dims != kernel.input_dim {
        return Err(Error::Shape(format!(
            "views {:?} / objects {:?} do not match kernel input layout",
            views.shape(),
            objects.shape()
        )));
    }
    // K(Q) carries the amplitude and periodic factor; the unit object vector
    // makes the linear factor 1.
    let mut vk = kernel.clone();
    vk.kind = KernelKind::ProductPeriodicLinear { view_dims };
    vk.input_dim = view_dims + 1;
    let ones = Tensor::ones(views.rows(), 1);
    let xq = Tensor::from_fn(views.rows(), view_dims + 1, |i, j| {
        if j < view_dims {
            views.get(i, j)
        } else {
            ones.get(i, 0)
        }
    });
    let kq = vk.eval_tensor(&xq, &xq)?;
    let l = view_factor(&kq)?;

    let (np, p1) = (objects.rows(), objects.cols());
    let nq = views.rows();
    let v = Tensor::from_fn(np * nq, p1 * nq, |i, h| {
        let (p, q) = (i / nq, i % nq);
        let (a, b) = (h / nq, h % nq);
        objects.get(p, a) * l.get(q, b)
    });
    Ok(LowRankFactor {
        v,
        objects: objects.clone(),
        view_chol: l,
    })
}

/// Cholesky factor of `K(Q)` when it is positive definite. The periodic
/// factor repeats with period π, so some view grids give a singular `K(Q)`;
/// those fall back to the eigen factor `U Λ^½`, which stays exact.
fn view_factor(kq: &Tensor) -> Result<Tensor> {
    if let Ok(c) = linalg::cholesky(kq, BASE_JITTER) {
        if c.jitter_used == 0.0 {
            return Ok(c.lower);
        }
    }
    let n = kq.rows();
    let eig = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| kq.get(i, j)));
    if let Some(bad) = eig.eigenvalues.iter().find(|v| **v < -1e-10 * eig.eigenvalues.amax().max(1.0)) {
        return Err(Error::InvalidArgument(format!("view kernel has negative eigenvalue {bad}")));
    }
    Ok(Tensor::from_fn(n, n, |i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()))
}

/// Solves `(V Vᵀ + diag(noise)) X = rhs` with the Woodbury identity and
/// returns `log |V Vᵀ + diag(noise)|` from the determinant lemma. Cost is
/// `O(N H² + H³)`.
pub fn low_rank_solve(factor: &LowRankFactor, noise_diag: &Tensor, rhs: &Tensor) -> Result<(Tensor, f64)> {
    let n = factor.len();
    let h = factor.rank();
    if noise_diag.len() != n || rhs.rows() != n {
        return Err(Error::Shape(format!(
            "factor has {n} rows, noise {} and rhs {}",
            noise_diag.len(),
            rhs.rows()
        )));
    }
    if let Some(bad) = noise_diag.data().iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidArgument(format!("noise entry {bad} is not positive")));
    }
    let d = noise_diag.data();
    let v = &factor.v;
    // D⁻¹ V and D⁻¹ rhs
    let dinv_v = Tensor::from_fn(n, h, |i, j| v.get(i, j) / d[i]);
    let dinv_r = Tensor::from_fn(n, rhs.cols(), |i, j| rhs.get(i, j) / d[i]);
    // inner = I + Vᵀ D⁻¹ V
    let mut inner = Tensor::eye(h);
    crate::numerics::tensor::gemm(1.0, v, true, &dinv_v, false, 1.0, &mut inner);
    let chol = linalg::cholesky(&inner, BASE_JITTER)?;
    if chol.jitter_used > 0.0 {
        return Err(Error::NotPositiveDefinite {
            jitter: chol.jitter_used,
        });
    }
    let mut vt_dr = Tensor::zeros(h, rhs.cols());
    crate::numerics::tensor::gemm(1.0, v, true, &dinv_r, false, 0.0, &mut vt_dr);
    let w = chol.solve(&vt_dr);
    let mut sol = dinv_r;
    crate::numerics::tensor::gemm(-1.0, &dinv_v, false, &w, false, 1.0, &mut sol);
    let logdet = d.iter().map(|x| x.ln()).sum::<f64>() + chol.logdet();
    Ok((sol, logdet))
}
