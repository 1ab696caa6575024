//! Two-step prefiltering of the daily log-load series.
//!
//! Step one removes short-run drivers (temperature, weekday, holidays) with a
//! piecewise-linear regression fitted on pre-shock data only. Step two removes
//! yearly levels estimated on each year's Jan 1 – Mar 3 window. The result is
//! the dependent variable of the impact model.

mod long_run;
mod short_run;

pub use long_run::{fit_year_effects, long_run_adjust, YearEffects, YearWindowMode, MIN_WINDOW_DAYS};
pub use short_run::{fit_short_run, short_term_adjust, BreakpointGrid, Coefficient, ShortRunModel, DEFAULT_SHOCK_DATE};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrefilterError {
    #[error("insufficient pre-shock data: {0}")]
    InsufficientData(String),
    #[error("year {year}: only {count} usable days in the Jan 1 - Mar 3 window (need {required})")]
    InsufficientWindow { year: i32, count: usize, required: usize },
    #[error("year {0} outside the fitted year-effect span")]
    YearOutsideSpan(i32),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// Structured text report of both prefilter stages.
#[derive(Debug, Clone, Serialize)]
pub struct PrefilterReport<'a> {
    pub short_run: &'a ShortRunModel,
    pub year_effects: &'a YearEffects,
}

impl PrefilterReport<'_> {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("prefilter report serializes")
    }
}
