//! Evaluation metrics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Affine least-squares map `[pred, 1] W ≈ truth`, fitted jointly over all
/// rows. Both sides are centered first, so the intercept is exact.
pub fn affine_align(pred: &Tensor, truth: &Tensor) -> Result<Tensor> {
    let n = pred.rows();
    if truth.rows() != n || n == 0 {
        return Err(Error::Shape(format!(
            "prediction has {n} rows, truth {}",
            truth.rows()
        )));
    }
    let col_means = |t: &Tensor| -> Vec<f64> {
        (0..t.cols()).map(|j| t.col_vec(j).iter().sum::<f64>() / n as f64).collect()
    };
    let (pm, tm) = (col_means(pred), col_means(truth));
    let design = DMatrix::from_fn(n, pred.cols(), |i, j| pred.get(i, j) - pm[j]);
    let target = DMatrix::from_fn(n, truth.cols(), |i, j| truth.get(i, j) - tm[j]);
    let svd = design.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let w = svd
        .solve(&target, tol)
        .map_err(|e| Error::InvalidArgument(format!("alignment solve failed: {e}")))?;
    let fit = design * w;
    Ok(Tensor::from_fn(n, truth.cols(), |i, j| fit[(i, j)] + tm[j]))
}

/// RMSE after affine alignment of `pred` onto `truth`.
pub fn aligned_rmse(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    let fit = affine_align(pred, truth)?;
    let se: f64 = fit.zip_map(truth, |a, b| (a - b) * (a - b)).sum();
    Ok((se / truth.len() as f64).sqrt())
}

/// Mean squared error over all entries.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("mse of empty tensors".into()));
    }
    Ok(a.zip_map(b, |x, y| (x - y) * (x - y)).sum() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_rmse() {
        let t = Tensor::from_fn(10, 2, |i, j| (i as f64 * 0.3 + j as f64).sin());
        assert!(aligned_rmse(&t, &t).unwrap() < 1e-12);
    }

    #[test]
    fn linear_transform_is_aligned_away() {
        let t = Tensor::from_fn(12, 2, |i, j| (i as f64 * 0.7 + j as f64 * 1.3).cos());
        let p = Tensor::from_fn(12, 2, |i, _| 2.0 * t.get(i, 0) - t.get(i, 1) + 0.5);
        let p = Tensor::from_fn(12, 2, |i, j| if j == 0 { p.get(i, 0) } else { -3.0 * t.get(i, 1) });
        assert!(aligned_rmse(&p, &t).unwrap() < 1e-10);
    }

    #[test]
    fn constant_predictor_gives_standard_deviation() {
        let t = Tensor::from_fn(50, 1, |i, _| (i as f64 * 0.9).sin());
        let mean = t.sum() / 50.0;
        let sd = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
        let r = aligned_rmse(&Tensor::full(50, 2, 3.0), &t).unwrap();
        assert!((r - sd).abs() < 1e-10, "{r} vs {sd}");
    }
}
