//! Dense linear algebra with reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use tape::{contrastive_slope, contrastive_value, distance, Gradients, Nonlinearity, Tape, Var};
pub use tensor::{axpy, dot, matvec_into, Tensor};
