use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use super::ImpactError;
use crate::calendar::week_of_year;
use crate::linalg;

/// One regression column of the impact model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Intercept,
    Week(u32),
    ShockWeek(u32),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("intercept"),
            Term::Week(w) => write!(f, "week{w:02}"),
            Term::ShockWeek(w) => write!(f, "shock_week{w:02}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImpactDesign {
    pub dates: Vec<NaiveDate>,
    pub y: Vec<f64>,
    pub terms: Vec<Term>,
    pub x: DMatrix<f64>,
    pub dropped: Vec<Term>,
}

fn row_terms(date: NaiveDate, shock_year: i32) -> [Option<Term>; 3] {
    let w = week_of_year(date);
    [Some(Term::Intercept), Some(Term::Week(w)), (date.year() == shock_year).then_some(Term::ShockWeek(w))]
}

/// Design matrix: intercept, week effects (first observed week is the
/// baseline) and one interaction per observed shock-year week.
pub fn build_design(adjusted: &[(NaiveDate, f64)], shock_year: i32) -> Result<ImpactDesign, ImpactError> {
    let mut obs: Vec<(NaiveDate, f64)> = adjusted.to_vec();
    obs.sort_by_key(|o| o.0);
    if obs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(ImpactError::Invalid("duplicate dates in adjusted series".into()));
    }
    if let Some((d, _)) = obs.iter().find(|(d, _)| d.year() > shock_year) {
        return Err(ImpactError::Invalid(format!("{d} is after the shock year {shock_year}")));
    }
    if obs.iter().any(|(_, v)| !v.is_finite()) {
        return Err(ImpactError::Invalid("non-finite adjusted value".into()));
    }
    let years: BTreeSet<i32> = obs.iter().map(|(d, _)| d.year()).collect();
    if years.len() < 2 {
        return Err(ImpactError::Invalid("adjusted series must cover at least two years".into()));
    }
    let hist_weeks: BTreeSet<u32> =
        obs.iter().filter(|(d, _)| d.year() != shock_year).map(|(d, _)| week_of_year(*d)).collect();
    let shock_weeks: BTreeSet<u32> =
        obs.iter().filter(|(d, _)| d.year() == shock_year).map(|(d, _)| week_of_year(*d)).collect();
    if let Some(w) = shock_weeks.iter().find(|w| !hist_weeks.contains(w)) {
        return Err(ImpactError::NoHistoricalWeek(*w));
    }
    let all_weeks: BTreeSet<u32> = hist_weeks.union(&shock_weeks).copied().collect();

    let mut terms = vec![Term::Intercept];
    terms.extend(all_weeks.iter().skip(1).map(|w| Term::Week(*w)));
    terms.extend(shock_weeks.iter().map(|w| Term::ShockWeek(*w)));

    let col_of = |t: Term| terms.iter().position(|x| *x == t);
    let mut x = DMatrix::zeros(obs.len(), terms.len());
    for (i, (d, _)) in obs.iter().enumerate() {
        for t in row_terms(*d, shock_year).into_iter().flatten() {
            if let Some(j) = col_of(t) {
                x[(i, j)] = 1.0;
            }
        }
    }
    let kept = linalg::independent_columns(&x);
    let dropped: Vec<Term> = (0..terms.len()).filter(|j| !kept.contains(j)).map(|j| terms[j]).collect();
    let (x, terms) = if dropped.is_empty() {
        (x, terms)
    } else {
        (linalg::select_columns(&x, &kept), kept.iter().map(|&j| terms[j]).collect())
    };
    Ok(ImpactDesign {
        dates: obs.iter().map(|o| o.0).collect(),
        y: obs.iter().map(|o| o.1).collect(),
        terms,
        x,
        dropped,
    })
}
