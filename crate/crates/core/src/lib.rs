// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod container;
pub mod data;
pub mod error;
pub mod kernels;
pub mod models;
pub mod numerics;
pub mod sparse_gp;
pub mod training;

pub use error::{Error, Result};
