//! Dense linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Matrices whose condition estimate exceeds this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Largest absolute entry. All residuals in this crate use this norm.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Induced infinity norm (maximum absolute row sum), used for condition
/// estimates.
pub fn induced_norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm_inf(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `‖m - I‖∞`
pub fn identity_defect(m: &Matrix) -> f64 {
    norm_inf(&(m - Matrix::identity(m.nrows(), m.ncols())))
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Inverse by LU with partial pivoting followed by one step of residual
/// refinement. Fails when the infinity-norm condition number exceeds
/// [`MAX_CONDITION`].
pub fn invert(m: &Matrix, context: &str) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::InvalidDimension(format!(
            "{context}: cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            context: format!("{context}: non-finite entries"),
        });
    }
    let n = m.nrows();
    let lu = m.clone().lu();
    let Some(mut inv) = lu.try_inverse() else {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            context: context.to_string(),
        });
    };
    let residual = Matrix::identity(n, n) - m * &inv;
    inv += &inv * residual;

    let condition = induced_norm_inf(m) * induced_norm_inf(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned {
            condition,
            context: context.to_string(),
        });
    }
    Ok(inv)
}

/// Checks the conditioning guard without keeping the inverse.
pub fn ensure_invertible(m: &Matrix, context: &str) -> Result<()> {
    invert(m, context).map(|_| ())
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

/// Evenly spaced points on `[lo, hi]`, endpoints included. A single sample is
/// the midpoint.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}
