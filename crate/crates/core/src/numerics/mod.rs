//! Tensors, the gradient tape, and Cholesky-based linear algebra.

pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_many, GradCheck};
pub use graph::{value_and_grad, Gradients, Graph, Node, Var};
pub use linalg::{cholesky, gauss_logpdf, CholeskyFactor, BASE_JITTER};
pub use tensor::Tensor;
