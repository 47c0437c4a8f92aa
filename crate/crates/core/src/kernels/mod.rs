//! Covariance functions, GP-LVM auxiliary inputs, and the Kronecker
//! low-rank kernel algebra.

pub mod auxiliary;
pub mod kernel;
pub mod lowrank;

pub use auxiliary::{gplvm_params, AuxiliaryData, GplvmHandle};
pub use kernel::{Kernel, KernelKind, KernelVars};
pub use lowrank::{build_low_rank, kronecker_inputs, low_rank_solve, LowRankFactor};
