use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Covariance family. Column layout for the product kernels is
/// `[view columns | object columns]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelKind {
    /// `σ² exp(−‖x − x′‖² / (2 l²))`
    Rbf,
    /// `σ² xᵀx′`
    Linear,
    /// `σ² exp(−2 sin²(‖x_v − x′_v‖) / l²) · x_oᵀ x′_o`
    ProductPeriodicLinear { view_dims: usize },
    /// Same covariance as `ProductPeriodicLinear`, tagged with the
    /// `P` objects × `Q` views structure that admits the Kronecker factor.
    LowRankKronecker {
        view_dims: usize,
        objects: usize,
        views: usize,
        object_dims: usize,
    },
}

/// A covariance function with positive parameters stored as logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub input_dim: usize,
    pub log_lengthscale: f64,
    pub log_variance: f64,
    /// White-noise variance added on the diagonal of `K(X, X)`; zero
    /// disables it.
    pub noise: f64,
    pub train_lengthscale: bool,
    pub train_variance: bool,
}

/// Kernel parameters bound to a graph for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct KernelVars {
    pub log_lengthscale: Var,
    pub log_variance: Var,
}

impl Kernel {
    pub fn new(kind: KernelKind, input_dim: usize, lengthscale: f64, variance: f64) -> Result<Self> {
        if !(lengthscale > 0.0) || !(variance > 0.0) {
            return Err(Error::InvalidArgument(
                "length scale and variance must be positive".into(),
            ));
        }
        match kind {
            KernelKind::ProductPeriodicLinear { view_dims }
            | KernelKind::LowRankKronecker { view_dims, .. }
                if view_dims >= input_dim =>
            {
                return Err(Error::InvalidArgument(format!(
                    "product kernel needs object columns: view_dims {view_dims}, input_dim {input_dim}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            input_dim,
            log_lengthscale: lengthscale.ln(),
            log_variance: variance.ln(),
            noise: 0.0,
            train_lengthscale: true,
            train_variance: true,
        })
    }

    pub fn rbf(input_dim: usize, lengthscale: f64, variance: f64) -> Self {
        Self::new(KernelKind::Rbf, input_dim, lengthscale, variance).expect("valid rbf")
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn variance(&self) -> f64 {
        self.log_variance.exp()
    }

    pub fn view_dims(&self) -> Option<usize> {
        match self.kind {
            KernelKind::ProductPeriodicLinear { view_dims }
            | KernelKind::LowRankKronecker { view_dims, .. } => Some(view_dims),
            _ => None,
        }
    }

    /// Registers the parameters on `g`; trainable ones become gradient
    /// leaves.
    pub fn bind(&self, g: &mut Graph) -> KernelVars {
        let ll = Tensor::scalar(self.log_lengthscale);
        let lv = Tensor::scalar(self.log_variance);
        KernelVars {
            log_lengthscale: if self.train_lengthscale { g.param(ll) } else { g.constant(ll) },
            log_variance: if self.train_variance { g.param(lv) } else { g.constant(lv) },
        }
    }

    fn check_dims(&self, g: &Graph, x: Var) -> Result<()> {
        let d = g.shape(x).1;
        if d != self.input_dim {
            return Err(Error::Shape(format!(
                "kernel expects {} input columns, got {d}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Cross-covariance `K(x1, x2)`.
    pub fn eval(&self, g: &mut Graph, p: &KernelVars, x1: Var, x2: Var) -> Result<Var> {
        self.check_dims(g, x1)?;
        self.check_dims(g, x2)?;
        let amp = g.exp(p.log_variance);
        let base = match self.kind {
            KernelKind::Rbf => {
                let d2 = g.sqdist(x1, x2);
                let inv_l2 = inv_sq_lengthscale(g, p);
                let e = g.scale_by(d2, inv_l2);
                let e = g.scale(e, -0.5);
                g.exp(e)
            }
            KernelKind::Linear => g.matmul_t(x1, false, x2, true),
            KernelKind::ProductPeriodicLinear { view_dims }
            | KernelKind::LowRankKronecker { view_dims, .. } => {
                let od = self.input_dim - view_dims;
                let v1 = g.slice_cols(x1, 0, view_dims);
                let v2 = g.slice_cols(x2, 0, view_dims);
                let o1 = g.slice_cols(x1, view_dims, od);
                let o2 = g.slice_cols(x2, view_dims, od);
                let periodic = periodic_factor(g, p, v1, v2);
                let lin = g.matmul_t(o1, false, o2, true);
                g.mul(periodic, lin)
            }
        };
        Ok(g.scale_by(base, amp))
    }

    /// `K(x, x)` including the white-noise diagonal.
    pub fn eval_sym(&self, g: &mut Graph, p: &KernelVars, x: Var) -> Result<Var> {
        let k = self.eval(g, p, x, x)?;
        if self.noise > 0.0 {
            let n = g.shape(x).0;
            let nz = g.constant(Tensor::eye(n).scale(self.noise));
            Ok(g.add(k, nz))
        } else {
            Ok(k)
        }
    }

    /// Diagonal `k(x_i, x_i)` as an `n x 1` column, without forming the
    /// full matrix.
    pub fn eval_diag(&self, g: &mut Graph, p: &KernelVars, x: Var) -> Result<Var> {
        self.check_dims(g, x)?;
        let n = g.shape(x).0;
        let amp = g.exp(p.log_variance);
        let d = match self.kind {
            KernelKind::Rbf => g.broadcast(amp, n, 1),
            KernelKind::Linear => {
                let sq = g.square(x);
                let s = g.sum_cols(sq);
                g.scale_by(s, amp)
            }
            KernelKind::ProductPeriodicLinear { view_dims }
            | KernelKind::LowRankKronecker { view_dims, .. } => {
                let o = g.slice_cols(x, view_dims, self.input_dim - view_dims);
                let sq = g.square(o);
                let s = g.sum_cols(sq);
                g.scale_by(s, amp)
            }
        };
        Ok(if self.noise > 0.0 { g.shift(d, self.noise) } else { d })
    }

    /// Plain-value evaluation of `K(x1, x2)`.
    pub fn eval_tensor(&self, x1: &Tensor, x2: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let a = g.constant(x1.clone());
        let b = g.constant(x2.clone());
        let k = self.eval(&mut g, &p, a, b)?;
        Ok(g.value(k).clone())
    }

    /// Single-entry evaluation `k(x, x′)`.
    pub fn k(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        let a = Tensor::from_vec(&[1, x.len()], x.to_vec())?;
        let b = Tensor::from_vec(&[1, xp.len()], xp.to_vec())?;
        Ok(self.eval_tensor(&a, &b)?.item())
    }
}

fn inv_sq_lengthscale(g: &mut Graph, p: &KernelVars) -> Var {
    let m2 = g.scale(p.log_lengthscale, -2.0);
    g.exp(m2)
}

/// `exp(−2 sin²(‖v − v′‖) / l²)`; for one view column the distance is
/// `|v − v′|` and `sin²` is even, so the signed difference is used to keep
/// the gradient smooth at coincident views.
fn periodic_factor(g: &mut Graph, p: &KernelVars, v1: Var, v2: Var) -> Var {
    let dist = if g.shape(v1).1 == 1 {
        let (n1, n2) = (g.shape(v1).0, g.shape(v2).0);
        let ones2 = g.constant(Tensor::ones(1, n2));
        let ones1 = g.constant(Tensor::ones(n1, 1));
        let a = g.matmul(v1, ones2);
        let b = g.matmul_t(ones1, false, v2, true);
        g.sub(a, b)
    } else {
        g.dist(v1, v2)
    };
    let s = g.sin(dist);
    let s2 = g.square(s);
    let inv_l2 = inv_sq_lengthscale(g, p);
    let e = g.scale_by(s2, inv_l2);
    let e = g.scale(e, -2.0);
    g.exp(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_self_covariance_is_variance() {
        let k = Kernel::rbf(2, 0.7, 1.9);
        assert!((k.k(&[0.3, -1.0], &[0.3, -1.0]).unwrap() - 1.9).abs() < 1e-14);
    }

    #[test]
    fn rbf_lengthscale_two_at_distance_two() {
        let k = Kernel::rbf(1, 2.0, 1.0);
        let v = k.k(&[0.0], &[2.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_objects_annihilate() {
        let k = Kernel::new(KernelKind::ProductPeriodicLinear { view_dims: 1 }, 3, 1.0, 1.0).unwrap();
        let v = k.k(&[0.4, 1.0, 0.0], &[1.1, 0.0, 2.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let k = Kernel::rbf(2, 1.0, 1.0);
        let a = Tensor::zeros(3, 2);
        let b = Tensor::zeros(3, 3);
        assert!(matches!(k.eval_tensor(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn product_kernel_needs_object_columns() {
        assert!(Kernel::new(KernelKind::ProductPeriodicLinear { view_dims: 2 }, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn diagonal_matches_full_matrix() {
        let x = Tensor::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        for kind in [
            KernelKind::Rbf,
            KernelKind::Linear,
            KernelKind::ProductPeriodicLinear { view_dims: 1 },
        ] {
            let k = Kernel::new(kind, 3, 1.3, 0.8).unwrap();
            let full = k.eval_tensor(&x, &x).unwrap();
            let mut g = Graph::new();
            let p = k.bind(&mut g);
            let xv = g.constant(x.clone());
            let d = k.eval_diag(&mut g, &p, xv).unwrap();
            for i in 0..5 {
                assert!((g.value(d).get(i, 0) - full.get(i, i)).abs() < 1e-14);
            }
        }
    }
}
