//! Dense arithmetic, normalizations, similarity measures and the gradient
//! engine used by every loss in the crate.

mod tape;
mod tensor;
mod vector;

pub use tape::{
    finite_difference_gradient, max_relative_error, value_and_grad, Gradients, Tape, Var, LOG_EPS,
};
pub use tensor::{dot, norm, Tensor};
pub use vector::{
    argmax, cosine_distance, cosine_similarity, l2_normalize, log_sum_exp, mean, minmax_normalize,
    softmax,
};
