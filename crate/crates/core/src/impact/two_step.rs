//! Year-level estimation error in the regression covariance.
//!
//! The prefiltered series subtracts from every day of year `y` the level
//! `α̂_y`, a contrast of window means of the same series. Its error shifts the
//! whole year, so treating `α̂` as known misstates the variance of the
//! shock-year effects. With `D` the non-base year dummies and `A` the
//! window-mean contrasts (`α̂ − α = A u`), the coefficients are linear in the
//! errors, `β̂ − β = G (I − D A) u`, where `G` is the estimator's smoother.
//!
//! * maximum likelihood: `V = s² (M − P Bᵀ − B Pᵀ + B Q Bᵀ)` with
//!   `M = (XᵀΩ⁻¹X)⁻¹`, `B = G D`, `P = M Xᵀ Aᵀ` and `Q = A Ω Aᵀ`;
//! * OLS: Newey–West with influence rows `c_t = (XᵀX)⁻¹ x_t − B a_t` in
//!   place of the bread-scaled scores.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use super::arma::{gls_fit, ArmaStateSpace, RegressionData};
use super::hac::{bartlett_meat, default_bandwidth};
use super::{build_design, Estimator, ImpactError, ImpactModel};
use crate::linalg;

/// Replace the regression block of `model.param_cov` with one that carries
/// the error of the year levels estimated on `windows` (dates per year, base
/// year included). `adjusted` is the series the model was fitted on.
pub fn add_year_effect_error(
    model: &mut ImpactModel,
    adjusted: &[(NaiveDate, f64)],
    windows: &BTreeMap<i32, Vec<NaiveDate>>,
    base_year: i32,
) -> Result<(), ImpactError> {
    let k = model.terms.len();
    if model.sigma2 <= 0.0 || (0..k).all(|i| model.param_cov[(i, i)] == 0.0) {
        return Ok(());
    }
    let design = build_design(adjusted, model.shock_year)?;
    if design.terms != model.terms {
        return Err(ImpactError::Invalid("design does not match the fitted model".into()));
    }
    let n = design.y.len();
    let row: BTreeMap<NaiveDate, usize> = design.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let base = windows
        .get(&base_year)
        .filter(|w| !w.is_empty())
        .ok_or_else(|| ImpactError::Invalid(format!("no window days in base year {base_year}")))?;
    let years: Vec<i32> = windows.keys().copied().filter(|y| *y != base_year).collect();
    if years.is_empty() {
        return Ok(());
    }

    // sparse rows of A: (design row, weight) per non-base year
    let mut contrasts: Vec<Vec<(usize, f64)>> = Vec::with_capacity(years.len());
    for y in &years {
        let own = &windows[y];
        if own.is_empty() {
            return Err(ImpactError::Invalid(format!("no window days in {y}")));
        }
        let mut a = Vec::with_capacity(own.len() + base.len());
        for (days, sign) in [(own, 1.0), (base, -1.0)] {
            let w = sign / days.len() as f64;
            for d in days {
                let i = *row.get(d).ok_or_else(|| ImpactError::Invalid(format!("window day {d} not in the series")))?;
                a.push((i, w));
            }
        }
        contrasts.push(a);
    }
    let year_of: Vec<i32> = design.dates.iter().map(chrono::Datelike::year).collect();
    let dummies = DMatrix::from_fn(n, years.len(), |t, j| f64::from(u8::from(year_of[t] == years[j])));
    let xt_at = DMatrix::from_fn(k, years.len(), |c, j| contrasts[j].iter().map(|(i, w)| w * design.x[(*i, c)]).sum());

    let beta_cov = match model.estimator {
        Estimator::MlArma => {
            let data = RegressionData::new(&design.x, &design.y);
            let fit = gls_fit(&model.phi, &model.theta, &data).ok_or(ImpactError::StationarityViolation)?;
            let s2 = fit.ssr / (n - k) as f64;
            let m = fit.xtx_inv;
            let mut b = DMatrix::zeros(k, years.len());
            for j in 0..years.len() {
                let col: Vec<f64> = dummies.column(j).iter().copied().collect();
                let g = gls_fit(&model.phi, &model.theta, &RegressionData::new(&design.x, &col))
                    .ok_or(ImpactError::StationarityViolation)?;
                b.set_column(j, &g.beta);
            }
            let acvf = ArmaStateSpace::new(&model.phi, &model.theta)
                .ok_or(ImpactError::StationarityViolation)?
                .autocovariances(n);
            let q = DMatrix::from_fn(years.len(), years.len(), |i, j| {
                let mut s = 0.0;
                for (r, a) in &contrasts[i] {
                    for (c, w) in &contrasts[j] {
                        s += a * w * acvf[r.abs_diff(*c)];
                    }
                }
                s
            });
            let p = &m * &xt_at;
            let pbt = &p * b.transpose();
            (m - &pbt - pbt.transpose() + &b * q * b.transpose()) * s2
        }
        Estimator::OlsHac => {
            let y = DVector::from_column_slice(&design.y);
            let ols = linalg::ols(&design.x, &y)?;
            let m = linalg::spd_inverse(&design.x.tr_mul(&design.x))?;
            let b = &m * design.x.tr_mul(&dummies);
            let mut influence = &design.x * &m;
            for (j, a) in contrasts.iter().enumerate() {
                for (i, w) in a {
                    let shift = b.column(j) * *w;
                    let mut r = influence.row_mut(*i);
                    r -= shift.transpose();
                }
            }
            for (t, e) in ols.residuals.iter().enumerate() {
                influence.row_mut(t).scale_mut(*e);
            }
            let lags = model.hac_bandwidth.unwrap_or_else(|| default_bandwidth(n));
            bartlett_meat(&influence, lags)
        }
    };
    let sym = (&beta_cov + beta_cov.transpose()) * 0.5;
    model.param_cov.view_mut((0, 0), (k, k)).copy_from(&sym);
    Ok(())
}
