//! Matrices whose entries are polynomials in the path parameter.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `entries[i][j]` holds the coefficients of entry `(i, j)` in ascending
/// powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<Vec<f64>>>,
}

impl PolyMatrix {
    pub fn new(entries: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let rows = entries.len();
        if rows == 0 {
            return Err(Error::InvalidDimension(
                "polynomial matrix needs at least one row".into(),
            ));
        }
        let cols = entries[0].len();
        if cols == 0 || entries.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidDimension(
                "polynomial matrix rows must be non-empty and of equal length".into(),
            ));
        }
        if entries.iter().flatten().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("polynomial coefficients must be finite".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    /// Constant polynomial matrix.
    pub fn constant(m: &Matrix) -> Self {
        let entries = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| vec![m[(i, j)]]).collect())
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[Vec<Vec<f64>>] {
        &self.entries
    }

    pub fn degree(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .map(|c| c.len().saturating_sub(1))
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, s: f64) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| horner(&self.entries[i][j], s))
    }

    pub fn derivative(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| {
                        let d: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect();
                        if d.is_empty() {
                            vec![0.0]
                        } else {
                            d
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivative() {
        // [[1 + 2s + 3s^2]]
        let p = PolyMatrix::new(vec![vec![vec![1.0, 2.0, 3.0]]]).unwrap();
        assert_eq!(p.eval(2.0)[(0, 0)], 17.0);
        assert_eq!(p.derivative().eval(2.0)[(0, 0)], 14.0);
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(PolyMatrix::new(vec![vec![vec![1.0]], vec![]]).is_err());
        assert!(PolyMatrix::new(vec![]).is_err());
    }

    #[test]
    fn empty_coefficient_list_is_zero() {
        let p = PolyMatrix::new(vec![vec![vec![]]]).unwrap();
        assert_eq!(p.eval(3.0)[(0, 0)], 0.0);
        assert_eq!(p.derivative().eval(3.0)[(0, 0)], 0.0);
    }
}
