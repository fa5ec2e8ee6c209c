//! Small MLPs with tape-based reverse-mode differentiation and a
//! finite-difference gradient checker.

mod check;
pub mod loss;
mod net;
mod tape;

pub use check::{central_differences, compare, fd_check, fd_check_net, relative_errors, CheckReport};
pub use net::{Activation, Layer, NetParams};
pub use tape::{forward, Tape};

use crate::error::Result;
use crate::ndcore::Matrix;

/// Forward and reverse in one call: loss and parameter gradient for a batch loss.
pub fn loss_and_grad(
    params: &NetParams,
    x: &Matrix,
    loss: impl FnOnce(&Matrix) -> Result<(f64, Matrix)>,
) -> Result<(f64, NetParams)> {
    let (out, mut tape) = forward(params, x)?;
    let (l, upstream) = loss(&out)?;
    let (g, _) = tape.backward(&upstream)?;
    Ok((l, g))
}
