//! Bias of the batch mean estimator against the full-data optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Recorded `μ_b` (one `m x L` matrix per batch) and the end-of-epoch
/// `μ_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochBias {
    pub batch_mu: Vec<Tensor>,
    pub mu_t: Tensor,
}

/// Per-epoch `b_i = (1/L) Σ_l ‖(1/B) Σ_j μ_j^l − μ_T^l‖₁`, divided by `m`
/// when `per_inducing` is set.
pub fn bias_trajectory(history: &[EpochBias], per_inducing: bool) -> Result<Vec<f64>> {
    if history.is_empty() {
        return Err(Error::InvalidArgument("bias history is empty".into()));
    }
    history
        .iter()
        .enumerate()
        .map(|(e, rec)| {
            if rec.batch_mu.is_empty() {
                return Err(Error::InvalidArgument(format!("epoch {e} recorded no batches")));
            }
            let (m, l) = (rec.mu_t.rows(), rec.mu_t.cols());
            let mut avg = Tensor::zeros(m, l);
            for mu in &rec.batch_mu {
                if mu.shape() != rec.mu_t.shape() {
                    return Err(Error::Shape(format!(
                        "batch mean {:?} vs target {:?}",
                        mu.shape(),
                        rec.mu_t.shape()
                    )));
                }
                avg.add_assign(mu);
            }
            let avg = avg.scale(1.0 / rec.batch_mu.len() as f64);
            let l1: f64 = avg.zip_map(&rec.mu_t, |a, b| (a - b).abs()).sum();
            let mut b = l1 / l as f64;
            if per_inducing {
                b /= m as f64;
            }
            Ok(b)
        })
        .collect()
}
