//! Moving-ball videos, IDX digit files, rotated-digit datasets, metrics,
//! and the on-disk dataset cache.

pub mod cache;
pub mod idx;
pub mod metrics;
pub mod moving_ball;
pub mod rotated;
pub mod toy;

pub use idx::{parse_idx, parse_idx_labels, write_idx, IdxFile};
pub use metrics::{affine_align, aligned_rmse, mse};
pub use moving_ball::{generate_moving_ball, generate_moving_ball_range, generate_video, path_factor, BallConfig, MovingBallVideo};
pub use rotated::{build_rotated_dataset, rotate_image, HeldOutRule, RotatedConfig, RotatedDigitDataset};
pub use toy::{generate_toy, ToyConfig, ToyData};
