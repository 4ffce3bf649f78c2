//! Dense numeric kernel: matrices, layer primitives with backward passes,
//! parameters, a seeded generator and a finite-difference gradient checker.

mod gradcheck;
mod matrix;
pub mod ops;
mod param;
mod rng;
mod scalar;

pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, GroupReport};
pub use matrix::Matrix;
pub use ops::{cross_entropy, gelu, gelu_grad, layer_norm, layer_norm_backward, softmax_in_place, softmax_rows};
pub use param::{Parameter, ParameterSet};
pub use rng::Rng;
pub use scalar::Scalar;
