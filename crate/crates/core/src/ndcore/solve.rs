use std::cell::Cell;

use crate::error::{Error, Result};

use super::cholesky::{cholesky, Cholesky};
use super::matrix::{Matrix, Vector};

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of regularized-system factorizations performed on the calling thread.
pub fn factorizations() -> u64 {
    FACTORIZATIONS.with(Cell::get)
}

/// A factored `K + λI`, reusable for forward solves and adjoint solves.
#[derive(Debug, Clone)]
pub struct RegularizedSystem {
    chol: Cholesky,
    lambda: f64,
}

/// Partials of a scalar objective with respect to the inputs of `(K + λI) α = y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveAdjoint {
    pub grad_k: Matrix,
    pub grad_lambda: f64,
    pub grad_y: Matrix,
}

impl RegularizedSystem {
    pub fn factor(k: &Matrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge weight must be positive, got {lambda}")));
        }
        let mut m = k.clone();
        m.add_diagonal(lambda);
        let chol = cholesky(&m)?;
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        Ok(Self { chol, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    pub fn solve(&self, y: &[f64]) -> Result<Vector> {
        self.chol.solve(y)
    }

    pub fn solve_columns(&self, y: &Matrix) -> Result<Matrix> {
        self.chol.solve_matrix(y)
    }

    /// `log det(K + λI)`
    pub fn log_det(&self) -> f64 {
        let l = self.chol.factor();
        2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `(K + λI)⁻¹`
    pub fn inverse(&self) -> Matrix {
        self.chol.inverse()
    }

    /// Reverse-mode rule for `α = (K + λI)⁻¹ y`, one column per right-hand side.
    ///
    /// With `v = (K + λI)⁻¹ ū`: `ȳ = v`, `K̄ = −sym(v αᵀ)`, `λ̄ = −Σ v ⊙ α`.
    pub fn adjoint(&self, alpha: &Matrix, upstream: &Matrix) -> Result<SolveAdjoint> {
        if alpha.rows() != self.dim() || upstream.rows() != self.dim() || alpha.cols() != upstream.cols() {
            return Err(Error::DimensionMismatch(format!(
                "adjoint of {n}x{n} system with alpha {}x{} and upstream {}x{}",
                alpha.rows(),
                alpha.cols(),
                upstream.rows(),
                upstream.cols(),
                n = self.dim()
            )));
        }
        let v = self.chol.solve_matrix(upstream)?;
        let outer = v.matmul_t(alpha)?;
        let grad_k = outer.symmetrized().scaled(-1.0);
        let grad_lambda = -v.data().iter().zip(alpha.data()).map(|(a, b)| a * b).sum::<f64>();
        Ok(SolveAdjoint { grad_k, grad_lambda, grad_y: v })
    }
}

/// `α = (K + λI)⁻¹ y` via Cholesky.
pub fn solve_regularized(k: &Matrix, lambda: f64, y: &Vector) -> Result<Vector> {
    if k.rows() != y.len() {
        return Err(Error::LengthMismatch { expected: k.rows(), got: y.len() });
    }
    RegularizedSystem::factor(k, lambda)?.solve(y)
}

/// Single right-hand-side form of [`RegularizedSystem::adjoint`]. Refactors `K + λI`.
pub fn solve_adjoint(k: &Matrix, lambda: f64, alpha: &Vector, upstream: &Vector) -> Result<(Matrix, f64, Vector)> {
    let sys = RegularizedSystem::factor(k, lambda)?;
    let a = Matrix::from_raw(alpha.len(), 1, alpha.to_vec());
    let u = Matrix::from_raw(upstream.len(), 1, upstream.to_vec());
    let adj = sys.adjoint(&a, &u)?;
    Ok((adj.grad_k, adj.grad_lambda, Vector::from_raw(adj.grad_y.into_data())))
}
