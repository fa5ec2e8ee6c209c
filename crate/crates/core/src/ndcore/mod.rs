//! Dense linear algebra: matrices, Cholesky, regularized solves and their adjoint.

mod cholesky;
mod matrix;
mod solve;

pub use cholesky::{cholesky, Cholesky, SYMMETRY_TOLERANCE};
pub use matrix::{dot, norm, sq_dist, Matrix, Vector};
pub use solve::{factorizations, solve_adjoint, solve_regularized, RegularizedSystem, SolveAdjoint};

use crate::error::{Error, Result};

/// Norms below this are treated as a vanished vector by [`cosine`].
pub const COSINE_EPS: f64 = 1e-12;

/// Cosine similarity, clamped to `[-1, 1]`. Zero when either vector has
/// (near) zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), got: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na < COSINE_EPS || nb < COSINE_EPS {
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
