//! Rotated-digit datasets for conditional generation at unseen angles.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Bilinear rotation of a `side x side` image by `angle` (counter-clockwise)
/// about its center, with zero padding. Angles are taken modulo `2π`, so a
/// full turn is an exact copy.
pub fn rotate_image(img: &[f64], side: usize, angle: f64) -> Vec<f64> {
    let a = angle.rem_euclid(TAU);
    if a == 0.0 || (TAU - a) < 1e-12 {
        return img.to_vec();
    }
    let c = (side as f64 - 1.0) / 2.0;
    let (s, co) = a.sin_cos();
    let px = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= side as isize || col >= side as isize {
            0.0
        } else {
            img[r as usize * side + col as usize]
        }
    };
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for col in 0..side {
            let (x, y) = (col as f64 - c, c - r as f64);
            // inverse map: source = R(−a) · target
            let sx = co * x + s * y;
            let sy = -s * x + co * y;
            let (fc, fr) = (sx + c, c - sy);
            let (c0, r0) = (fc.floor(), fr.floor());
            let (dc, dr) = (fc - c0, fr - r0);
            let (c0, r0) = (c0 as isize, r0 as isize);
            out[r * side + col] = (1.0 - dr) * ((1.0 - dc) * px(r0, c0) + dc * px(r0, c0 + 1))
                + dr * ((1.0 - dc) * px(r0 + 1, c0) + dc * px(r0 + 1, c0 + 1));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeldOutRule {
    /// Every row is used for training.
    None,
    /// One seeded angle per object is reserved as its generation target.
    OnePerObject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotatedConfig {
    pub digit: u8,
    /// `P` unique objects.
    pub objects: usize,
    /// `Q` angles on the grid `2πk/Q`, `k = 1..=Q`.
    pub angles: usize,
    pub held_out: HeldOutRule,
    pub seed: u64,
}

impl Default for RotatedConfig {
    fn default() -> Self {
        Self {
            digit: 3,
            objects: 60,
            angles: 16,
            held_out: HeldOutRule::OnePerObject,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotatedDigitDataset {
    /// `P·Q x K`, object-major (`row = p·Q + q`).
    pub images: Tensor,
    pub angles: Vec<f64>,
    pub object_id: Vec<usize>,
    pub held_out_mask: Vec<bool>,
    /// The unrotated objects, `P x K`.
    pub objects: Tensor,
    pub side: usize,
}

impl RotatedDigitDataset {
    pub fn train_rows(&self) -> Vec<usize> {
        (0..self.angles.len()).filter(|&i| !self.held_out_mask[i]).collect()
    }

    pub fn test_rows(&self) -> Vec<usize> {
        (0..self.angles.len()).filter(|&i| self.held_out_mask[i]).collect()
    }

    /// Angle grid `2πk/Q`.
    pub fn grid(q: usize) -> Vec<f64> {
        (1..=q).map(|k| TAU * k as f64 / q as f64).collect()
    }
}

/// Selects the first `P` images labelled `digit` (source order), rotates
/// each to the `Q` grid angles, and applies the held-out rule. `images` is
/// `n x side x side` or `n x side²`.
pub fn build_rotated_dataset(images: &Tensor, labels: &[u8], cfg: &RotatedConfig) -> Result<RotatedDigitDataset> {
    if labels.len() != images.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} images",
            labels.len(),
            images.rows()
        )));
    }
    if cfg.objects == 0 || cfg.angles == 0 {
        return Err(Error::Config("objects and angles must be positive".into()));
    }
    let k = images.cols();
    let side = (k as f64).sqrt().round() as usize;
    if side * side != k {
        return Err(Error::Shape(format!("images of {k} pixels are not square")));
    }
    let picks: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == cfg.digit)
        .take(cfg.objects)
        .collect();
    if picks.len() < cfg.objects {
        return Err(Error::InvalidArgument(format!(
            "only {} images of digit {} available, {} requested",
            picks.len(),
            cfg.digit,
            cfg.objects
        )));
    }
    let flat = Tensor::from_vec(&[images.rows(), k], images.data().to_vec())?;
    let objects = flat.select_rows(&picks);
    let grid = RotatedDigitDataset::grid(cfg.angles);
    let (p, q) = (cfg.objects, cfg.angles);
    let mut data = Vec::with_capacity(p * q * k);
    let mut angles = Vec::with_capacity(p * q);
    let mut object_id = Vec::with_capacity(p * q);
    for o in 0..p {
        for &a in &grid {
            data.extend(rotate_image(objects.row(o), side, a));
            angles.push(a);
            object_id.push(o);
        }
    }
    let mut held_out_mask = vec![false; p * q];
    if cfg.held_out == HeldOutRule::OnePerObject {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for o in 0..p {
            held_out_mask[o * q + rng.random_range(0..q)] = true;
        }
    }
    Ok(RotatedDigitDataset {
        images: Tensor::from_vec(&[p * q, k], data)?,
        angles,
        object_id,
        held_out_mask,
        objects,
        side,
    })
}
