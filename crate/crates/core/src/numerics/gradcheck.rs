//! Central-difference validation of tape gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Largest per-entry discrepancy between autodiff and central differences,
/// relative to `max(|g_ad|, |g_fd|, 1e-8)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.shape(out) != (1, 1) {
        return Err(Error::Shape("gradient check needs a scalar function".into()));
    }
    Ok(g.scalar(out))
}

/// Checks the gradient of `f` with respect to every input tensor. Returns
/// one report per input.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut reports = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let ad = grads.get(*v);
        let mut report = GradCheck {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
        };
        for e in 0..inputs[k].len() {
            let x0 = inputs[k].data()[e];
            work[k].data_mut()[e] = x0 + eps;
            let fp = eval(&f, &work)?;
            work[k].data_mut()[e] = x0 - eps;
            let fm = eval(&f, &work)?;
            work[k].data_mut()[e] = x0;
            let fd = (fp - fm) / (2.0 * eps);
            let a = ad.data()[e];
            let abs = (a - fd).abs();
            let rel = abs / a.abs().max(fd.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_index = e;
            }
            report.max_abs_error = report.max_abs_error.max(abs);
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Single-input form: maximum relative error between the tape gradient of
/// `f` at `x` and its central-difference estimate.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let reports = finite_diff_check_many(|g, v| f(g, v[0]), std::slice::from_ref(x), eps)?;
    Ok(reports[0].max_rel_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let a = Tensor::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let x = Tensor::column(vec![0.7, -1.3]);
        let err = finite_diff_check(
            |g, x| {
                let a = g.constant(a.clone());
                let ax = g.matmul(a, x);
                let q = g.matmul_t(x, true, ax, false);
                Ok(g.scale(q, 0.5))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn step_outside_range_rejected() {
        let x = Tensor::scalar(1.0);
        assert!(finite_diff_check(|g, x| Ok(g.sum(x)), &x, 1e-2).is_err());
    }
}
