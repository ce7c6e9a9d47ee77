//! Cholesky helpers shared by the dense and low-rank code paths.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};

/// Pivots below this fraction of the largest diagonal entry count as a failed
/// factorization, which triggers jitter escalation.
const PIVOT_FLOOR: f64 = 1e-15;

/// Smallest nonzero jitter tried, relative to the scale.
const JITTER_START: f64 = 1e-15;

/// Largest jitter tried, relative to the scale.
const JITTER_CEILING: f64 = 1e-4;

/// Lower Cholesky factor together with the diagonal jitter it needed.
#[derive(Clone, Debug)]
pub(crate) struct Chol {
    pub l: DMatrix<f64>,
    pub jitter: f64,
}

impl Chol {
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `L^T x = b`.
    pub fn solve_upper(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    pub fn solve_upper_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper_vec(&self.solve_lower_vec(b))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        let linv = self.solve_lower(&DMatrix::identity(n, n));
        linv.tr_mul(&linv)
    }
}

fn try_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let l = m.clone().cholesky()?.unpack();
    let floor = PIVOT_FLOOR * max_diag;
    if l.diagonal().iter().all(|&v| v.is_finite() && v * v > floor) {
        Some(l)
    } else {
        None
    }
}

/// Factors `m + jitter * I`. On failure the jitter grows tenfold (starting
/// from `1e-15 * scale` when it is zero) until it would exceed `1e-4 * scale`.
pub(crate) fn cholesky_escalating(m: &DMatrix<f64>, jitter: f64, scale: f64) -> Result<Chol> {
    let ceiling = JITTER_CEILING * scale;
    let mut jitter = jitter;
    loop {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(l) = try_factor(&a) {
            return Ok(Chol { l, jitter });
        }
        let next = if jitter > 0.0 {
            jitter * 10.0
        } else {
            JITTER_START * scale
        };
        if !(next <= ceiling) {
            return Err(GpError::numerical(format!(
                "cholesky factorization of a {}x{} matrix failed with jitter up to {:e}",
                m.nrows(),
                m.ncols(),
                jitter
            )));
        }
        jitter = next;
    }
}

/// Column-wise squared norms of a matrix.
pub(crate) fn col_sq_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.norm_squared()))
}

/// `m * diag(d)`.
pub(crate) fn scale_columns(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &s) in out.column_iter_mut().zip(d.iter()) {
        col *= s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 2.0]);
        let c = cholesky_escalating(&m, 0.0, 1.0).unwrap();
        assert_eq!(c.jitter, 0.0);
        let r = &c.l * c.l.transpose();
        assert!((r - &m).norm() / m.norm() < 1e-14);
        let b = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        let x = c.solve_vec(&b);
        assert!((&m * x - b).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_escalates() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let c = cholesky_escalating(&m, 0.0, 1.0).unwrap();
        assert!(c.jitter > 0.0 && c.jitter <= 1e-4);
    }

    #[test]
    fn hopeless_matrix_errors() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_escalating(&m, 0.0, 1.0).is_err());
    }
}
