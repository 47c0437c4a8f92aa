//! PCA-based initialization of GP-LVM vectors and inducing inputs.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Scores of the top `dims` principal components of the rows of `data`
/// (`P x K`), from the eigendecomposition of the centered Gram matrix.
/// Each component's sign is fixed so its largest-magnitude score is
/// positive.
pub fn pca_scores(data: &Tensor, dims: usize) -> Result<Tensor> {
    let (p, k) = (data.rows(), data.cols());
    if dims == 0 || dims > p {
        return Err(Error::InvalidArgument(format!("{dims} components from {p} rows")));
    }
    let mean: Vec<f64> = (0..k).map(|j| data.col_vec(j).iter().sum::<f64>() / p as f64).collect();
    let c = DMatrix::from_fn(p, k, |i, j| data.get(i, j) - mean[j]);
    let gram = &c * c.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = Tensor::zeros(p, dims);
    for (d, &e) in order.iter().take(dims).enumerate() {
        let s = eig.eigenvalues[e].max(0.0).sqrt();
        let col = eig.eigenvectors.column(e);
        let pivot = (0..p).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            out.set(i, d, sign * s * col[i]);
        }
    }
    Ok(out)
}

/// Inducing inputs `[angle | GP-LVM]`: `per_angle` rows at each grid angle
/// `2πk/Q`, with GP-LVM columns drawn independently per component from the
/// PCA scores of the objects.
pub fn pca_inducing<R: Rng>(scores: &Tensor, angles: usize, per_angle: usize, rng: &mut R) -> Tensor {
    let (p, dims) = (scores.rows(), scores.cols());
    let m = angles * per_angle;
    Tensor::from_fn(m, 1 + dims, |i, j| {
        if j == 0 {
            TAU * (i / per_angle + 1) as f64 / angles as f64
        } else {
            scores.get(rng.random_range(0..p), j - 1)
        }
    })
}
