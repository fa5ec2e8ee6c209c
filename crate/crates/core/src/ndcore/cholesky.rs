use crate::error::{Error, Result};

use super::matrix::{Matrix, Vector};

/// Inputs whose relative asymmetry exceeds this are rejected before factorizing.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
}

/// Factor a symmetric positive definite matrix.
///
/// The input is symmetrized before factoring so round-off asymmetry below
/// [`SYMMETRY_TOLERANCE`] is absorbed. A pivot that is not comfortably
/// positive (relative to the largest diagonal entry) is reported as
/// [`Error::NotPositiveDefinite`].
pub fn cholesky(a: &Matrix) -> Result<Cholesky> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.relative_asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    let a = a.symmetrized();
    let n = a.rows();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    let floor = (n.max(1) as f64) * f64::EPSILON * max_diag;

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d <= floor {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solve `A x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vector> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(Vector::from_raw(x))
    }

    fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: x.len() });
        }
        let l = &self.l;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[(i, k)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        Ok(())
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::LengthMismatch { expected: n, got: b.rows() });
        }
        let mut out = Matrix::zeros(n, b.cols());
        let mut col = vec![0.0; n];
        for j in 0..b.cols() {
            for i in 0..n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col)?;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Matrix {
        self.solve_matrix(&Matrix::identity(self.dim()))
            .expect("identity has matching dimension")
    }

    pub fn reconstruct(&self) -> Matrix {
        self.l.matmul_t(&self.l).expect("square factor")
    }
}
