//! Synthetic videos of a soft-edged ball following a 2-d GP path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::numerics::{linalg, Tensor, BASE_JITTER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BallConfig {
    pub frames: usize,
    pub size: usize,
    /// RBF length scale of each coordinate path over times `1..=frames`.
    pub lengthscale: f64,
    pub radius: f64,
    pub softness: f64,
    pub margin: f64,
    /// GP values in `[-coord_range, coord_range]` map onto the window.
    pub coord_range: f64,
}

impl Default for BallConfig {
    fn default() -> Self {
        Self {
            frames: 30,
            size: 32,
            lengthscale: 2.0,
            radius: 3.0,
            softness: 1.0,
            margin: 4.0,
            coord_range: 2.5,
        }
    }
}

impl BallConfig {
    pub fn pixels(&self) -> usize {
        self.size * self.size
    }

    /// Frame times `1..=frames` as an `N x 1` column.
    pub fn times(&self) -> Tensor {
        Tensor::column((1..=self.frames).map(|t| t as f64).collect())
    }

    /// Pixel coordinate of a GP value.
    pub fn to_pixel(&self, v: f64) -> f64 {
        let lo = self.margin;
        let hi = self.size as f64 - 1.0 - self.margin;
        let c = v.clamp(-self.coord_range, self.coord_range);
        lo + (c + self.coord_range) / (2.0 * self.coord_range) * (hi - lo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.size == 0 || !(self.lengthscale > 0.0) || !(self.softness > 0.0) {
            return Err(Error::Config("ball config needs positive frames, size, lengthscale, softness".into()));
        }
        if 2.0 * self.margin >= self.size as f64 - 1.0 {
            return Err(Error::Config("margin leaves no room in the frame".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MovingBallVideo {
    /// `frames x (size·size)`, row-major pixels, values in `[0, 1]`.
    pub frames: Tensor,
    /// `frames x 2` GP path in GP units.
    pub trajectory: Tensor,
    pub seed: u64,
    pub index: u64,
}

/// Intensity `clamp(1 − (d − r)/s, 0, 1)` at every pixel for a ball at
/// `(cx, cy)` (column, row).
pub fn render_frame(cfg: &BallConfig, cx: f64, cy: f64, out: &mut [f64]) {
    let n = cfg.size;
    for r in 0..n {
        for c in 0..n {
            let d = ((c as f64 - cx).powi(2) + (r as f64 - cy).powi(2)).sqrt();
            out[r * n + c] = (1.0 - (d - cfg.radius) / cfg.softness).clamp(0.0, 1.0);
        }
    }
}

/// Lower Cholesky factor of the path prior.
pub fn path_factor(cfg: &BallConfig) -> Result<Tensor> {
    let k = Kernel::rbf(1, cfg.lengthscale, 1.0);
    let t = cfg.times();
    Ok(linalg::cholesky(&k.eval_tensor(&t, &t)?, BASE_JITTER)?.lower)
}

/// Video number `index` of the stream identified by `seed`.
pub fn generate_video(cfg: &BallConfig, factor: &Tensor, seed: u64, index: u64) -> MovingBallVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = cfg.frames;
    let eps = Tensor::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
    let trajectory = factor.matmul(&eps);
    let mut frames = Tensor::zeros(n, cfg.pixels());
    let px = cfg.pixels();
    for t in 0..n {
        let cx = cfg.to_pixel(trajectory.get(t, 0));
        let cy = cfg.to_pixel(trajectory.get(t, 1));
        render_frame(cfg, cx, cy, &mut frames.data_mut()[t * px..(t + 1) * px]);
    }
    MovingBallVideo {
        frames,
        trajectory,
        seed,
        index,
    }
}

/// `count` videos, indices `0..count` of the stream `seed`.
pub fn generate_moving_ball(seed: u64, count: usize, cfg: &BallConfig) -> Result<Vec<MovingBallVideo>> {
    generate_moving_ball_range(seed, 0, count, cfg)
}

pub fn generate_moving_ball_range(seed: u64, first: u64, count: usize, cfg: &BallConfig) -> Result<Vec<MovingBallVideo>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    cfg.validate()?;
    let factor = path_factor(cfg)?;
    Ok((0..count as u64)
        .map(|i| generate_video(cfg, &factor, seed, first + i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensities_and_mass() {
        let cfg = BallConfig::default();
        let v = generate_moving_ball(3, 2, &cfg).unwrap();
        assert!(v[0].frames.data().iter().all(|p| (0.0..=1.0).contains(p)));
        // A soft edge of width s integrates to the disc of radius r + s/2.
        let disc = std::f64::consts::PI * (cfg.radius + cfg.softness / 2.0).powi(2);
        for t in 0..cfg.frames {
            let mass: f64 = v[1].frames.row(t).iter().sum();
            assert!((mass - disc).abs() / disc < 0.2, "{mass} vs {disc}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = BallConfig::default();
        let a = generate_moving_ball(11, 3, &cfg).unwrap();
        let b = generate_moving_ball(11, 3, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].trajectory, a[1].trajectory);
    }

    #[test]
    fn ball_stays_inside() {
        let cfg = BallConfig::default();
        for v in [-10.0, 10.0] {
            let p = cfg.to_pixel(v);
            assert!(p - cfg.radius - cfg.softness >= 0.0);
            assert!(p + cfg.radius + cfg.softness <= cfg.size as f64 - 1.0);
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert!(generate_moving_ball(0, 0, &BallConfig::default()).is_err());
    }
}
