//! Small seeded regression problem: observations are a fixed random linear
//! lift of a 1-d GP sample plus noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::Kernel;
use crate::numerics::{linalg, Tensor, BASE_JITTER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub points: usize,
    pub data_dim: usize,
    pub lengthscale: f64,
    pub noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            points: 40,
            data_dim: 6,
            lengthscale: 1.0,
            noise: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyData {
    /// Inputs on an even grid over `[0, 10]`, `N x 1`.
    pub x: Tensor,
    /// `N x K`.
    pub y: Tensor,
    /// Latent GP sample, `N x 1`.
    pub f: Tensor,
}

pub fn generate_toy(cfg: &ToyConfig, seed: u64) -> Result<ToyData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.points;
    let step = if n > 1 { 10.0 / (n - 1) as f64 } else { 0.0 };
    let x = Tensor::from_fn(n, 1, |i, _| i as f64 * step);
    let k = Kernel::rbf(1, cfg.lengthscale, 1.0).eval_tensor(&x, &x)?;
    let l = linalg::cholesky(&k, BASE_JITTER)?.lower;
    let eps = Tensor::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
    let f = l.matmul(&eps);
    let lift = Tensor::from_fn(1, cfg.data_dim, |_, _| StandardNormal.sample(&mut rng));
    let mut y = f.matmul(&lift);
    for v in y.data_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += cfg.noise * e;
    }
    Ok(ToyData { x, y, f })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let c = ToyConfig::default();
        let a = generate_toy(&c, 1).unwrap();
        assert_eq!(a.y.shape(), &[40, 6]);
        assert_eq!(a, generate_toy(&c, 1).unwrap());
    }
}
