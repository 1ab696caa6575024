//! Residual diagnostics, goodness of fit and the two in-time placebo tests.

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::impact::ImpactModel;
use crate::ingest::{CountryConfig, DailyObservation};
use crate::pipeline::{fit_country, PipelineError, PipelineOptions};

/// Weeks tested by the pre-outbreak placebo.
pub const PRE_OUTBREAK_WEEKS: std::ops::RangeInclusive<u32> = 1..=8;
pub const DEFAULT_ALPHAS: [f64; 2] = [0.05, 0.10];
pub const DEFAULT_LB_LAG: usize = 10;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("series of length {n} is too short (need more than {required})")]
    TooShort { n: usize, required: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("model has no shock-year effect for week {0}")]
    MissingWeek(u32),
    #[error("inputs are not aligned")]
    Misaligned,
    #[error(transparent)]
    Pipeline(#[from] Box<PipelineError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LjungBox {
    pub stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub lag: usize,
}

/// Ljung–Box portmanteau test with `lag − fitted_params` degrees of freedom
/// (at least one).
pub fn ljung_box(residuals: &[f64], lag: usize, fitted_params: usize) -> Result<LjungBox, DiagnosticsError> {
    let n = residuals.len();
    if n <= lag + fitted_params || lag == 0 {
        return Err(DiagnosticsError::TooShort { n, required: lag + fitted_params });
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(DiagnosticsError::Degenerate("non-finite residual".into()));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = residuals.iter().map(|v| v - mean).collect();
    let c0: f64 = centred.iter().map(|v| v * v).sum();
    if c0 <= f64::MIN_POSITIVE * n as f64 {
        return Err(DiagnosticsError::Degenerate("zero-variance residuals".into()));
    }
    let nf = n as f64;
    let stat = nf
        * (nf + 2.0)
        * (1..=lag)
            .map(|h| {
                let rho = (h..n).map(|t| centred[t] * centred[t - h]).sum::<f64>() / c0;
                rho * rho / (nf - h as f64)
            })
            .sum::<f64>();
    let df = lag.saturating_sub(fitted_params).max(1);
    let chi = ChiSquared::new(df as f64).expect("positive df");
    Ok(LjungBox { stat, df, p_value: chi.sf(stat), lag })
}

fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, DiagnosticsError> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(DiagnosticsError::Misaligned);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let tss: f64 = actual.iter().map(|v| (v - mean).powi(2)).sum();
    if tss <= 0.0 {
        return Err(DiagnosticsError::Degenerate("dependent variable has zero variance".into()));
    }
    let rss: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    Ok((1.0 - rss / tss).clamp(0.0, 1.0))
}

/// R² of the impact model's deterministic part against the prefiltered series.
pub fn fit_r2(adjusted: &[(NaiveDate, f64)], model: &ImpactModel) -> Result<f64, DiagnosticsError> {
    let predicted: Vec<f64> = adjusted
        .iter()
        .map(|(d, _)| model.deterministic(*d, true))
        .collect::<Result<_, _>>()
        .map_err(|e| DiagnosticsError::Degenerate(e.to_string()))?;
    let actual: Vec<f64> = adjusted.iter().map(|o| o.1).collect();
    r_squared(&actual, &predicted)
}

/// R² of the combined prediction (all three stages) against raw log load.
pub fn total_r2(raw: &[(NaiveDate, f64)], prediction: &[(NaiveDate, f64)]) -> Result<f64, DiagnosticsError> {
    if raw.len() != prediction.len() || raw.iter().zip(prediction).any(|(a, b)| a.0 != b.0) {
        return Err(DiagnosticsError::Misaligned);
    }
    let a: Vec<f64> = raw.iter().map(|o| o.1).collect();
    let p: Vec<f64> = prediction.iter().map(|o| o.1).collect();
    r_squared(&a, &p)
}

/// Two-sided z-test of one shock-year effect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeekTest {
    pub week: u32,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    /// One decision per significance level, in the order they were given.
    pub rejected: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectionCount {
    pub alpha: f64,
    pub tests: usize,
    pub failures: usize,
    /// Expected count under the null, `tests × alpha`.
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboResult {
    /// Year whose interactions were tested.
    pub year: i32,
    pub weeks: Vec<WeekTest>,
    pub counts: Vec<RejectionCount>,
}

impl PlaceboResult {
    pub fn failures_at(&self, alpha: f64) -> Option<usize> {
        self.counts.iter().find(|c| (c.alpha - alpha).abs() < 1e-12).map(|c| c.failures)
    }
}

/// z-tests of `γ*_w = 0` for the given weeks.
pub fn test_shock_weeks(model: &ImpactModel, weeks: &[u32], alphas: &[f64]) -> Result<PlaceboResult, DiagnosticsError> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut tests = Vec::with_capacity(weeks.len());
    for &w in weeks {
        let (est, se) = model.gamma_star_with_se(w).ok_or(DiagnosticsError::MissingWeek(w))?;
        let z = if se > 0.0 {
            est / se
        } else if est == 0.0 {
            0.0
        } else {
            est.signum() * f64::INFINITY
        };
        let p = 2.0 * normal.sf(z.abs());
        tests.push(WeekTest {
            week: w,
            estimate: est,
            std_error: se,
            z,
            p_value: p,
            rejected: alphas.iter().map(|a| p < *a).collect(),
        });
    }
    let counts = alphas
        .iter()
        .enumerate()
        .map(|(i, &alpha)| RejectionCount {
            alpha,
            tests: tests.len(),
            failures: tests.iter().filter(|t| t.rejected[i]).count(),
            expected: tests.len() as f64 * alpha,
        })
        .collect();
    Ok(PlaceboResult { year: model.shock_year, weeks: tests, counts })
}

/// Placebo 1: the shock-year effects of weeks 1–8, before the outbreak.
pub fn placebo_pre_outbreak(model: &ImpactModel, alphas: &[f64]) -> Result<PlaceboResult, DiagnosticsError> {
    let weeks: Vec<u32> = PRE_OUTBREAK_WEEKS.collect();
    test_shock_weeks(model, &weeks, alphas)
}

/// Placebo 2: drop every observation after `pseudo_year`, pretend the shock
/// happened on the same month-day in `pseudo_year`, rerun the whole pipeline
/// and test all pseudo-year week effects.
pub fn placebo_shift_year(
    series: &[DailyObservation],
    config: &CountryConfig,
    options: &PipelineOptions,
    pseudo_year: i32,
) -> Result<PlaceboResult, DiagnosticsError> {
    let kept: Vec<DailyObservation> = series.iter().filter(|o| o.date.year() <= pseudo_year).cloned().collect();
    let shock = options.shock_date;
    let pseudo_date = NaiveDate::from_ymd_opt(pseudo_year, shock.month(), shock.day())
        .ok_or_else(|| DiagnosticsError::Degenerate(format!("no {} in {pseudo_year}", shock.format("%m-%d"))))?;
    let opts = PipelineOptions { shock_date: pseudo_date, ..options.clone() };
    let fit = fit_country(&kept, config, &opts).map_err(Box::new)?;
    let weeks: Vec<u32> = fit.model.gamma_star.keys().copied().collect();
    test_shock_weeks(&fit.model, &weeks, &options.alphas)
}

/// Table-style summary of one country's diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub country: String,
    pub order: (usize, usize),
    pub ljung_box: Option<LjungBox>,
    pub apf_r2: Option<f64>,
    pub total_r2: Option<f64>,
    pub placebo1: Option<PlaceboResult>,
    pub placebo2: Option<PlaceboResult>,
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

impl DiagnosticsReport {
    pub const HEADER: &'static str =
        "country\tAR\tMA\tljung_box [p]\tAPF-R2\tT-R2\tplacebo1_5%\tplacebo1_10%\tplacebo2_5%\tplacebo2_10%";

    fn counts(p: &Option<PlaceboResult>) -> [String; 2] {
        [0.05, 0.10].map(|a| p.as_ref().and_then(|r| r.failures_at(a)).map_or("NA".into(), |c| c.to_string()))
    }

    /// One tab-separated row in the header's column order.
    pub fn row(&self) -> String {
        let lb = self.ljung_box.map_or("NA".into(), |l| format!("{:.2} [{:.2}]", l.stat, l.p_value));
        let [p1a, p1b] = Self::counts(&self.placebo1);
        let [p2a, p2b] = Self::counts(&self.placebo2);
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.country,
            self.order.0,
            self.order.1,
            lb,
            fmt_opt(self.apf_r2, 2),
            fmt_opt(self.total_r2, 2),
            p1a,
            p1b,
            p2a,
            p2b
        )
    }

    /// Row of expected type-I counts for the placebo columns.
    pub fn expected_row(&self) -> String {
        let exp = |p: &Option<PlaceboResult>, a: f64| {
            p.as_ref()
                .and_then(|r| r.counts.iter().find(|c| (c.alpha - a).abs() < 1e-12))
                .map_or("NA".into(), |c| format!("{:.1}", c.expected))
        };
        format!(
            "expected\t\t\t\t\t\t{}\t{}\t{}\t{}",
            exp(&self.placebo1, 0.05),
            exp(&self.placebo1, 0.10),
            exp(&self.placebo2, 0.05),
            exp(&self.placebo2, 0.10)
        )
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", Self::HEADER);
        let _ = writeln!(out, "{}", self.row());
        let _ = writeln!(out, "{}", self.expected_row());
        out
    }
}
