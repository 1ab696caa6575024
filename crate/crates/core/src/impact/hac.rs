use nalgebra::{DMatrix, DVector};

use super::ImpactError;
use crate::linalg::{self, LinalgError};

/// Newey–West automatic bandwidth `⌊4 (T/100)^{2/9}⌋`.
pub fn default_bandwidth(t: usize) -> usize {
    (4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Newey–West HAC covariance of OLS coefficients with Bartlett weights
/// `1 − l/(L+1)`:
///
/// ```text
/// V = (XᵀX)⁻¹ [ Σ_t e_t² x_t x_tᵀ + Σ_{l=1}^{L} w_l Σ_t e_t e_{t−l} (x_t x_{t−l}ᵀ + x_{t−l} x_tᵀ) ] (XᵀX)⁻¹
/// ```
///
/// With `L = 0` this is White's HC0 estimator.
pub fn newey_west_cov(
    regressors: &DMatrix<f64>,
    residuals: &DVector<f64>,
    bandwidth: Option<usize>,
) -> Result<DMatrix<f64>, ImpactError> {
    let n = regressors.nrows();
    if residuals.len() != n {
        return Err(ImpactError::Invalid(format!("{n} regressor rows vs {} residuals", residuals.len())));
    }
    let lags = bandwidth.unwrap_or_else(|| default_bandwidth(n)).min(n.saturating_sub(1));
    if linalg::independent_columns(regressors).len() < regressors.ncols() {
        return Err(LinalgError::Singular.into());
    }
    let bread = linalg::spd_inverse(&regressors.tr_mul(regressors)).map_err(|_| LinalgError::Singular)?;

    // scores g_t = e_t x_t
    let mut scores = regressors.clone();
    for (i, e) in residuals.iter().enumerate() {
        scores.row_mut(i).scale_mut(*e);
    }
    let cov = &bread * bartlett_meat(&scores, lags) * &bread;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// `Σ_t g_t g_tᵀ + Σ_{l=1}^{L} w_l Σ_t (g_t g_{t−l}ᵀ + g_{t−l} g_tᵀ)` over score rows `g_t`.
pub(crate) fn bartlett_meat(scores: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let n = scores.nrows();
    let mut meat = scores.tr_mul(scores);
    for l in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let gamma = scores.rows(l, n - l).tr_mul(&scores.rows(0, n - l));
        meat += (&gamma + gamma.transpose()) * w;
    }
    meat
}
