//! Week-of-year fixed-effects model with shock-year interactions and ARMA
//! errors, counterfactual predictions, percentage impacts and Monte Carlo
//! intervals.
//!
//! The model for the prefiltered series `ẏ_t` is
//!
//! ```text
//! ẏ_t = β₀ + γ_{w(t)} + γ*_{w(t)} · 1[year(t) = shock year] + u_t
//! ```
//!
//! with `u_t` ARMA(p, q) (maximum likelihood) or left unrestricted with a
//! Newey–West covariance (OLS + HAC). Impacts compare the full deterministic
//! prediction with the one where every `γ*` is zero.

pub mod arma;
mod design;
mod fit;
mod hac;
mod montecarlo;
pub mod optim;
mod order;
mod predict;
mod two_step;

pub use design::{build_design, ImpactDesign, Term};
pub use fit::{fit_impact_model, FitOptions, Likelihood};
pub use hac::{default_bandwidth, newey_west_cov};
pub use montecarlo::{monte_carlo_ci, DailyImpact, ImpactDraws, ImpactSeries, McOptions, SeriesMeta, WeeklyImpact};
pub use order::{select_arma_order, InformationCriterion, OrderSelection};
pub use predict::{compute_impact, predict_counterfactual, predict_factual};
pub use two_step::add_year_effect_error;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::week_of_year;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Exact maximum likelihood with ARMA errors.
    MlArma,
    /// OLS with Newey–West covariance.
    OlsHac,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::MlArma => "ml_arma",
            Estimator::OlsHac => "ols_hac",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ml_arma" | "ml" => Ok(Estimator::MlArma),
            "ols_hac" | "ols" => Ok(Estimator::OlsHac),
            other => Err(format!("unknown estimator `{other}` (expected ml_arma or ols_hac)")),
        }
    }
}

#[derive(Debug, Error, Clone)]
pub enum ImpactError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("shock-year week {0} has no observation in earlier years")]
    NoHistoricalWeek(u32),
    #[error("week {week} of {year} has no fitted effect")]
    MissingWeekEffect { year: i32, week: u32 },
    #[error("optimizer did not converge (gradient norm {grad_norm:.3e})")]
    NonConvergence { best: Box<ImpactModel>, grad_norm: f64 },
    #[error("ARMA estimate on the stationarity/invertibility boundary")]
    StationarityViolation,
    #[error("no ARMA order candidate produced a converged fit")]
    NoConvergedOrder,
    #[error("parameter covariance is not positive semidefinite")]
    CovarianceNotPsd,
    #[error("{rejected} of {attempted} Monte Carlo draws rejected (limit 20%)")]
    CovariancePathology { rejected: usize, attempted: usize },
    #[error("counterfactual level must be positive on {0}")]
    NonPositiveCounterfactual(NaiveDate),
    #[error("dates of factual and counterfactual predictions differ")]
    Misaligned,
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Fitted impact model.
///
/// Parameters are laid out as: regression terms (in `terms` order), AR
/// coefficients, MA coefficients, and, for maximum likelihood, the innovation
/// variance. `param_cov` follows the same order.
#[derive(Debug, Clone)]
pub struct ImpactModel {
    pub estimator: Estimator,
    pub shock_year: i32,
    pub order: (usize, usize),
    pub terms: Vec<Term>,
    pub beta: Vec<f64>,
    pub beta0: f64,
    /// Week effects, baseline week included at 0.
    pub gamma: BTreeMap<u32, f64>,
    /// Shock-year interaction effects.
    pub gamma_star: BTreeMap<u32, f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma2: f64,
    pub param_cov: DMatrix<f64>,
    pub loglik: Option<f64>,
    pub n_obs: usize,
    /// Variance `s²` used in the `exp(· + s²/2)` retransformation.
    pub retransform_var: f64,
    /// Regression residuals `ẏ_t − deterministic part`.
    pub residuals: Vec<(NaiveDate, f64)>,
    /// Whitened one-step innovations (ML) or the residuals (OLS).
    pub innovations: Vec<f64>,
    pub dropped_terms: Vec<String>,
    pub grad_norm: f64,
    pub hac_bandwidth: Option<usize>,
}

impl ImpactModel {
    pub fn n_params(&self) -> usize {
        self.param_cov.nrows()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        names.extend((1..=self.phi.len()).map(|i| format!("ar{i}")));
        names.extend((1..=self.theta.len()).map(|i| format!("ma{i}")));
        if self.has_sigma2_param() {
            names.push("sigma2".to_string());
        }
        names
    }

    pub(crate) fn has_sigma2_param(&self) -> bool {
        self.estimator == Estimator::MlArma
    }

    pub fn params(&self) -> DVector<f64> {
        let mut v: Vec<f64> = self.beta.clone();
        v.extend(&self.phi);
        v.extend(&self.theta);
        if self.has_sigma2_param() {
            v.push(self.sigma2);
        }
        DVector::from_vec(v)
    }

    pub fn term_index(&self, term: Term) -> Option<usize> {
        self.terms.iter().position(|t| *t == term)
    }

    pub fn std_error(&self, idx: usize) -> f64 {
        self.param_cov[(idx, idx)].max(0.0).sqrt()
    }

    /// (estimate, standard error) of the shock-year effect of `week`.
    pub fn gamma_star_with_se(&self, week: u32) -> Option<(f64, f64)> {
        let idx = self.term_index(Term::ShockWeek(week))?;
        Some((self.beta[idx], self.std_error(idx)))
    }

    /// Deterministic prediction on the log scale, optionally without the
    /// shock-year interaction.
    pub fn deterministic(&self, date: NaiveDate, with_shock: bool) -> Result<f64, ImpactError> {
        let week = week_of_year(date);
        let year = date.year();
        let g = self.gamma.get(&week).ok_or(ImpactError::MissingWeekEffect { year, week })?;
        let mut v = self.beta0 + g;
        if year == self.shock_year {
            let gs = self.gamma_star.get(&week).ok_or(ImpactError::MissingWeekEffect { year, week })?;
            if with_shock {
                v += gs;
            }
        }
        Ok(v)
    }

    /// Wald statistic, degrees of freedom and p-value for `γ*_w = 0` jointly
    /// over `weeks`.
    pub fn wald_shock_weeks(&self, weeks: &[u32]) -> Option<(f64, usize, f64)> {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let idx: Vec<usize> = weeks.iter().map(|w| self.term_index(Term::ShockWeek(*w))).collect::<Option<Vec<_>>>()?;
        if idx.is_empty() {
            return None;
        }
        let b = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.beta[i]));
        let v = DMatrix::from_fn(idx.len(), idx.len(), |a, c| self.param_cov[(idx[a], idx[c])]);
        let inv = v.cholesky()?.inverse();
        let stat = (b.transpose() * inv * &b)[(0, 0)];
        let dist = ChiSquared::new(idx.len() as f64).ok()?;
        Some((stat, idx.len(), 1.0 - dist.cdf(stat)))
    }
}
