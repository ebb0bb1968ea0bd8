//! Symmetric positive definite factorizations.
//!
//! Every `V^{-1}` product in the crate goes through [`SpdFactor`], a thin
//! wrapper over a Cholesky decomposition. There is deliberately no
//! pseudo-inverse fallback: with a ridge term `lambda > 0` every design
//! matrix is well conditioned, so a failed factorization means something
//! upstream is wrong.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected.
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Lower-triangular factor `L` with `M = L L^T`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `L^T v = rhs`; if `rhs ~ N(0, I)` then `v ~ N(0, M^{-1})`.
    pub fn solve_upper(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut v = rhs.clone();
        self.chol.l_dirty().tr_solve_lower_triangular_mut(&mut v);
        v
    }

    /// `x^T M^{-1} x`.
    pub fn inverse_quadratic_form(&self, x: &DVector<f64>) -> f64 {
        let mut v = x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        v.norm_squared()
    }
}

pub fn spd_factor(matrix: &DMatrix<f64>) -> Result<SpdFactor> {
    if !matrix.is_square() {
        return Err(Error::Dimension {
            expected: matrix.nrows(),
            found: matrix.ncols(),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let n = matrix.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    Cholesky::new(matrix.clone())
        .map(|chol| SpdFactor { chol })
        .ok_or(Error::NotPositiveDefinite)
}

pub fn spd_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != matrix.nrows() {
        return Err(Error::Dimension {
            expected: matrix.nrows(),
            found: rhs.len(),
        });
    }
    Ok(spd_factor(matrix)?.solve(rhs))
}

/// `sqrt(x^T A x)` for a positive semidefinite `A`, clamped at zero.
pub fn quadratic_norm(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x)).max(0.0).sqrt()
}

/// Max absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
