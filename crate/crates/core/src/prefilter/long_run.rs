use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::PrefilterError;
use crate::calendar::{in_pre_outbreak_window, is_weekend};
use crate::linalg;

/// Minimum usable days in any year's Jan 1 – Mar 3 window.
pub const MIN_WINDOW_DAYS: usize = 20;

/// Which days of the Jan 1 – Mar 3 window enter the year-effect regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum YearWindowMode {
    #[default]
    Weekdays,
    /// Every calendar day present in the series (weekends included when the
    /// series carries them).
    CalendarDays,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearLevel {
    pub year: i32,
    /// Level relative to the base year.
    pub alpha: f64,
    pub std_error: f64,
    pub window_days: usize,
}

/// Yearly fixed effects relative to the base (shock) year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearEffects {
    pub base_year: i32,
    /// Base-year level.
    pub alpha0: f64,
    pub base_window_days: usize,
    /// Non-base years in ascending order.
    pub years: Vec<YearLevel>,
    pub mode: YearWindowMode,
}

impl YearEffects {
    /// Dates of `series` inside each year's estimation window, base year included.
    pub fn window_dates(&self, series: &[(NaiveDate, f64)]) -> BTreeMap<i32, Vec<NaiveDate>> {
        let mut out: BTreeMap<i32, Vec<NaiveDate>> = BTreeMap::new();
        for (d, _) in series.iter().filter(|(d, _)| d.year() <= self.base_year && in_window(*d, self.mode)) {
            out.entry(d.year()).or_default().push(*d);
        }
        out
    }

    /// Effect subtracted from dates of `year`: zero for the base year.
    pub fn effect(&self, year: i32) -> Option<f64> {
        if year == self.base_year {
            return Some(0.0);
        }
        self.years.iter().find(|l| l.year == year).map(|l| l.alpha)
    }
}

fn in_window(date: NaiveDate, mode: YearWindowMode) -> bool {
    in_pre_outbreak_window(date) && (mode == YearWindowMode::CalendarDays || !is_weekend(date))
}

/// Regress the short-term adjusted series on year dummies over each year's
/// Jan 1 – Mar 3 window (both ends inclusive), with `base_year` as baseline.
/// Years after `base_year` are ignored.
pub fn fit_year_effects(
    adjusted: &[(NaiveDate, f64)],
    base_year: i32,
    mode: YearWindowMode,
) -> Result<YearEffects, PrefilterError> {
    let years: BTreeSet<i32> = adjusted.iter().map(|(d, _)| d.year()).filter(|y| *y <= base_year).collect();
    if !years.contains(&base_year) {
        return Err(PrefilterError::InsufficientWindow { year: base_year, count: 0, required: MIN_WINDOW_DAYS });
    }
    let others: Vec<i32> = years.iter().copied().filter(|y| *y != base_year).collect();
    let rows: Vec<(i32, f64)> = adjusted
        .iter()
        .filter(|(d, _)| d.year() <= base_year && in_window(*d, mode))
        .map(|(d, v)| (d.year(), *v))
        .collect();
    let count = |y: i32| rows.iter().filter(|(yy, _)| *yy == y).count();
    for &y in &years {
        let c = count(y);
        if c < MIN_WINDOW_DAYS {
            return Err(PrefilterError::InsufficientWindow { year: y, count: c, required: MIN_WINDOW_DAYS });
        }
    }
    if rows.iter().any(|(_, v)| !v.is_finite()) {
        return Err(PrefilterError::Invalid("non-finite adjusted value in year-effect window".into()));
    }

    let x = DMatrix::from_fn(rows.len(), 1 + others.len(), |i, j| {
        if j == 0 {
            1.0
        } else {
            f64::from(rows[i].0 == others[j - 1])
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let fit = linalg::ols(&x, &y)?;
    Ok(YearEffects {
        base_year,
        alpha0: fit.coef[0],
        base_window_days: count(base_year),
        years: others
            .iter()
            .enumerate()
            .map(|(j, &year)| YearLevel {
                year,
                alpha: fit.coef[j + 1],
                std_error: fit.se[j + 1],
                window_days: count(year),
            })
            .collect(),
        mode,
    })
}

/// Subtract each date's year effect.
pub fn long_run_adjust(
    adjusted: &[(NaiveDate, f64)],
    effects: &YearEffects,
) -> Result<Vec<(NaiveDate, f64)>, PrefilterError> {
    adjusted
        .iter()
        .map(|(d, v)| {
            let a = effects.effect(d.year()).ok_or(PrefilterError::YearOutsideSpan(d.year()))?;
            Ok((*d, v - a))
        })
        .collect()
}
