//! L1-constrained logistic regression via Bregman distance minimization.
//!
//! The training objective `sum_i ln(1 + exp(-y_i f(x_i)))` is posed as the
//! Bregman distance `D_B(0 || q)` induced by the bit-entropy generator, and
//! minimized by an auxiliary-function outer loop whose per-coordinate
//! subproblems are solved with a primal-dual log-barrier Newton method.
//! An independent proximal-gradient solver ([`oracle`]) cross-checks results.

pub mod auxfn;
pub mod barrier;
pub mod bregman;
pub mod cli;
pub mod data;
pub mod error;
pub mod oracle;
pub mod trainer;

pub use error::{Error, Result};
