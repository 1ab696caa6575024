use nalgebra::DMatrix;

use super::arma::RegressionData;
use super::fit::{ml_arma, FitOptions, Likelihood};
use super::ImpactError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InformationCriterion {
    #[default]
    Aic,
    Bic,
}

impl InformationCriterion {
    /// Criterion value for log-likelihood `loglik` with `k` free parameters.
    pub fn value(self, loglik: f64, k: usize, n: usize) -> f64 {
        match self {
            InformationCriterion::Aic => -2.0 * loglik + 2.0 * k as f64,
            InformationCriterion::Bic => -2.0 * loglik + (n as f64).ln() * k as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderSelection {
    pub order: (usize, usize),
    /// Every candidate with its criterion value (`None` when the fit failed).
    pub table: Vec<((usize, usize), Option<f64>)>,
}

/// Candidates ordered by parameter count, then AR before MA.
fn candidates(max_p: usize, max_q: usize) -> Vec<(usize, usize)> {
    let mut c: Vec<(usize, usize)> = (0..=max_p).flat_map(|p| (0..=max_q).map(move |q| (p, q))).collect();
    c.sort_by_key(|&(p, q)| (p + q, std::cmp::Reverse(p)));
    c
}

/// Pick the ARMA order of a residual series (a mean is estimated alongside)
/// by minimising the information criterion over `p ≤ max_p`, `q ≤ max_q`.
pub fn select_arma_order(
    residuals: &[f64],
    max_p: usize,
    max_q: usize,
    criterion: InformationCriterion,
    options: &FitOptions,
) -> Result<OrderSelection, ImpactError> {
    let n = residuals.len();
    if n <= 10 * (max_p + max_q) || n < 3 {
        return Err(ImpactError::Invalid(format!("{n} observations is too few for orders up to ({max_p}, {max_q})")));
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(ImpactError::Invalid("non-finite residual".into()));
    }
    let x = DMatrix::from_element(n, 1, 1.0);
    let data = RegressionData::new(&x, residuals);
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = residuals.iter().map(|v| v - mean).collect();

    // criteria compare maximised full likelihoods
    let options = &FitOptions { likelihood: Likelihood::Full, ..*options };
    let mut table = Vec::new();
    let mut best: Option<((usize, usize), f64)> = None;
    for (p, q) in candidates(max_p, max_q) {
        let value = match ml_arma(&data, &centred, p, q, options) {
            Ok(fit) if fit.converged && fit.gls.loglik.is_finite() => {
                Some(criterion.value(fit.gls.loglik, p + q + 2, n))
            }
            _ => None,
        };
        if let Some(v) = value {
            // strict improvement keeps the earlier (smaller, AR-first) candidate on ties
            if best.is_none_or(|(_, b)| v < b - 1e-9) {
                best = Some(((p, q), v));
            }
        }
        table.push(((p, q), value));
    }
    let (order, _) = best.ok_or(ImpactError::NoConvergedOrder)?;
    Ok(OrderSelection { order, table })
}
