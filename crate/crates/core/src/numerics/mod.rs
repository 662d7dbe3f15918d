//! Dense tensors, the seeded random stream and the finite-difference
//! gradient oracle used by every backward-pass test.

mod gradcheck;
mod rng;
mod tensor;

pub use gradcheck::{finite_diff_grad, max_rel_error, rel_error, DEFAULT_STEP};
pub use rng::{rng_normal, Rng, RngState};
pub use tensor::Tensor;
