//! Dense linear algebra with explicit forward/backward passes.

mod adamw;
mod gradcheck;
mod matrix;
mod ops;

pub use adamw::{adamw_step, global_norm, AdamWConfig, AdamWState, StepInfo};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, Param};
pub use matrix::Matrix;
pub use ops::{
    affine, affine_backward, gelu, gelu_backward, gelu_grad_scalar, gelu_scalar, log_sum_exp,
    matmul, matmul_nt, matmul_tn, mse_loss, softmax_in_place, softmax_rows, softmax_rows_backward,
    AffineGrads,
};
