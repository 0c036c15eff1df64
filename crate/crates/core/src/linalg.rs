//! Small dense-matrix helpers over `nalgebra` shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Number of design columns: intercept plus four binary covariates.
pub const DESIGN_DIM: usize = 5;

pub type DesignRow = [f64; DESIGN_DIM];

/// Column mask: the intercept is always active, other columns only when
/// they vary across rows (a constant column duplicates the intercept).
pub fn active_columns(rows: &[DesignRow]) -> [bool; DESIGN_DIM] {
    let mut mask = [true; DESIGN_DIM];
    if let Some(first) = rows.first() {
        for (k, m) in mask.iter_mut().enumerate().skip(1) {
            *m = rows.iter().any(|r| r[k] != first[k]);
        }
    }
    mask
}

pub fn active_indices(mask: &[bool; DESIGN_DIM]) -> Vec<usize> {
    (0..DESIGN_DIM).filter(|&k| mask[k]).collect()
}

/// `rows` restricted to the `active` columns, as an n×q matrix.
pub fn design_matrix(rows: &[DesignRow], active: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), active.len(), |i, j| rows[i][active[j]])
}

pub fn restrict(row: &DesignRow, active: &[usize]) -> DVector<f64> {
    DVector::from_iterator(active.len(), active.iter().map(|&k| row[k]))
}

/// Relative pivot floor below which a matrix is treated as singular.
const PIVOT_RTOL: f64 = 1e-10;

/// Cholesky factor of a symmetric positive-definite matrix, or `None` when a
/// pivot collapses relative to its diagonal entry (numerically rank deficient).
pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    for i in 0..m.nrows() {
        let d = m[(i, i)];
        if !(d > 0.0) || l[(i, i)] * l[(i, i)] <= PIVOT_RTOL * d {
            return None;
        }
    }
    Some(chol)
}

/// Ordinary least squares via the normal equations.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// (ZᵀZ)⁻¹
    pub gram_inverse: DMatrix<f64>,
}

impl OlsFit {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Returns `None` when ZᵀZ is not positive definite.
pub fn ols(z: &DMatrix<f64>, y: &DVector<f64>) -> Option<OlsFit> {
    let gram = z.transpose() * z;
    let chol = cholesky(&gram)?;
    let coefficients = chol.solve(&(z.transpose() * y));
    let residuals = y - z * &coefficients;
    Some(OlsFit {
        coefficients,
        residuals,
        gram_inverse: chol.inverse(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mask_drops_constant_columns() {
        let rows = [[1.0, 0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0, 1.0]];
        assert_eq!(active_columns(&rows), [true, false, true, false, true]);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let rows: Vec<DesignRow> = (0..6).map(|i| [1.0, (i % 2) as f64, (i / 3) as f64, 0.0, 0.0]).collect();
        let active = [0, 1, 2];
        let z = design_matrix(&rows, &active);
        let y = DVector::from_iterator(6, rows.iter().map(|r| 2.0 + 3.0 * r[1] - r[2]));
        let fit = ols(&z, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[2], -1.0, epsilon = 1e-12);
        assert!(fit.rss() < 1e-20);
    }

    #[test]
    fn collinear_design_fails() {
        let rows: Vec<DesignRow> = (0..6).map(|i| [1.0, (i % 2) as f64, (i % 2) as f64, 0.0, 0.0]).collect();
        let z = design_matrix(&rows, &[0, 1, 2]);
        let y = DVector::from_element(6, 1.0);
        assert!(ols(&z, &y).is_none());
    }
}
