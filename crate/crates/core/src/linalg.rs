//! Least squares and small dense-matrix helpers.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("no usable regressor columns")]
    NoColumns,
    #[error("not enough observations: {rows} rows for {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
}

/// Relative tolerance under which a column counts as linearly dependent on
/// the columns before it.
pub const RANK_TOL: f64 = 1e-9;

/// Least-squares fit with automatic removal of dependent columns.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficients over all input columns; dropped columns hold 0.
    pub coef: DVector<f64>,
    /// Standard errors over all input columns; dropped columns hold NaN.
    pub se: DVector<f64>,
    /// Covariance of the kept coefficients, in `kept` order.
    pub cov_kept: DMatrix<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub residuals: DVector<f64>,
    pub ssr: f64,
    /// `ssr / (n - rank)`; zero when the fit is exact.
    pub sigma2: f64,
    pub df_resid: usize,
}

impl OlsFit {
    pub fn fitted(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coef
    }

    pub fn is_dropped(&self, col: usize) -> bool {
        self.dropped.contains(&col)
    }
}

/// Indices of a maximal set of linearly independent columns, scanning left to
/// right. A column is dropped when its component orthogonal to the columns
/// already kept is below `RANK_TOL` of its own norm (or it is all zero).
pub fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut v = col;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let rem = v.norm();
        if rem > RANK_TOL * norm && basis.len() < n {
            basis.push(v / rem);
            kept.push(j);
        }
    }
    kept
}

/// Columns of `x` selected by `cols`.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

/// Ordinary least squares through a QR factorisation of the independent
/// columns.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, LinalgError> {
    if x.nrows() != y.len() {
        return Err(LinalgError::Dimension(format!("{} design rows vs {} observations", x.nrows(), y.len())));
    }
    let kept = independent_columns(x);
    if kept.is_empty() {
        return Err(LinalgError::NoColumns);
    }
    if kept.len() > x.nrows() {
        return Err(LinalgError::TooFewRows { rows: x.nrows(), cols: kept.len() });
    }
    let dropped: Vec<usize> = (0..x.ncols()).filter(|j| !kept.contains(j)).collect();
    let xk = select_columns(x, &kept);
    let qr = xk.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or(LinalgError::Singular)?;
    let residuals = y - &xk * &beta;
    let ssr = residuals.norm_squared();
    let df_resid = x.nrows() - kept.len();
    let sigma2 = if df_resid > 0 { ssr / df_resid as f64 } else { 0.0 };
    let rinv = r.solve_upper_triangular(&DMatrix::identity(kept.len(), kept.len())).ok_or(LinalgError::Singular)?;
    let cov_kept = (&rinv * rinv.transpose()) * sigma2;

    let mut coef = DVector::zeros(x.ncols());
    let mut se = DVector::from_element(x.ncols(), f64::NAN);
    for (k, &j) in kept.iter().enumerate() {
        coef[j] = beta[k];
        se[j] = cov_kept[(k, k)].max(0.0).sqrt();
    }
    Ok(OlsFit { coef, se, cov_kept, kept, dropped, residuals, ssr, sigma2, df_resid })
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let chol = a.clone().cholesky().ok_or(LinalgError::Singular)?;
    Ok(chol.inverse())
}

/// Symmetric square-root factor `L` with `L Lᵀ = a` for a positive
/// semidefinite `a`; small negative eigenvalues from rounding are clipped.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if let Some(chol) = a.clone().cholesky() {
        return chol.l();
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

/// Inverse of a symmetric matrix with eigenvalues clipped below at
/// `floor * max|eigenvalue|`.
pub fn regularized_sym_inverse(a: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = (floor * scale).max(f64::MIN_POSITIVE);
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v.abs().max(lo));
    &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose()
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation; `None` when either input has zero variance or fewer
/// than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}
