use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::predict::{compute_impact, predict_counterfactual, predict_factual};
use super::{arma, ImpactError, ImpactModel, Term};
use crate::calendar::{week_of_year, YearWeek};
use crate::exec::Execution;
use crate::linalg;

/// Rejected draws allowed, as a share of the requested draws.
pub const MAX_REJECTION_SHARE: f64 = 0.20;

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub n_draws: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { n_draws: 5000, seed: 42, exec: Execution::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyImpact {
    pub date: NaiveDate,
    pub impact: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeeklyImpact {
    pub week: YearWeek,
    pub impact: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Per-draw daily impacts, `values[draw][day]`, aligned with `dates`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactDraws {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Vec<f64>>,
}

/// Labels written into the header of serialized series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesMeta {
    pub country: String,
    pub estimator: String,
    pub order: (usize, usize),
    pub mode: String,
    pub seed: u64,
    pub n_draws: usize,
}

#[derive(Debug, Clone)]
pub struct ImpactSeries {
    pub meta: SeriesMeta,
    pub daily: Vec<DailyImpact>,
    pub weekly: Vec<WeeklyImpact>,
    pub factual: Vec<(NaiveDate, f64)>,
    pub counterfactual: Vec<(NaiveDate, f64)>,
    pub draws: ImpactDraws,
    pub rejected: usize,
}

/// Sorted copy, then the 2.5 and 97.5 percentiles.
pub(crate) fn interval95(values: &mut [f64]) -> (f64, f64) {
    values.sort_by(|a, b| a.total_cmp(b));
    (linalg::quantile_sorted(values, 0.025), linalg::quantile_sorted(values, 0.975))
}

/// Consecutive groups of dates sharing a (year, week) key.
pub(crate) fn week_groups(dates: &[NaiveDate]) -> Vec<(YearWeek, Vec<usize>)> {
    let mut groups: BTreeMap<YearWeek, Vec<usize>> = BTreeMap::new();
    for (i, d) in dates.iter().enumerate() {
        groups.entry(YearWeek::of(*d)).or_default().push(i);
    }
    groups.into_iter().collect()
}

impl ImpactSeries {
    fn header(&self, out: &mut String) {
        let m = &self.meta;
        let _ = writeln!(out, "# country: {}", m.country);
        let _ = writeln!(out, "# estimator: {}", m.estimator);
        let _ = writeln!(out, "# order: ({},{})", m.order.0, m.order.1);
        let _ = writeln!(out, "# mode: {}", m.mode);
        let _ = writeln!(out, "# seed: {}", m.seed);
        let _ = writeln!(out, "# draws: {}", m.n_draws);
    }

    pub fn daily_tsv(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        out.push_str("date\timpact_pct\tlo95\thi95\n");
        for d in &self.daily {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}", d.date, d.impact, d.lo95, d.hi95);
        }
        out
    }

    pub fn weekly_tsv(&self) -> String {
        let mut out = String::new();
        self.header(&mut out);
        out.push_str("week\timpact_pct\tlo95\thi95\n");
        for w in &self.weekly {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}", w.week, w.impact, w.lo95, w.hi95);
        }
        out
    }

    pub fn weekly_for(&self, week: YearWeek) -> Option<&WeeklyImpact> {
        self.weekly.iter().find(|w| w.week == week)
    }
}

/// Whether a drawn parameter vector is admissible.
fn admissible(model: &ImpactModel, draw: &DVector<f64>) -> bool {
    let k = model.beta.len();
    let (p, q) = (model.phi.len(), model.theta.len());
    let phi: Vec<f64> = (0..p).map(|i| draw[k + i]).collect();
    let theta: Vec<f64> = (0..q).map(|i| draw[k + p + i]).collect();
    if !arma::is_stationary(&phi) || !arma::is_invertible(&theta) {
        return false;
    }
    !model.has_sigma2_param() || model.sigma2 == 0.0 || draw[k + p + q] > 0.0
}

/// Plug-in impacts with percentile intervals from parameter draws.
///
/// Each draw has its own random stream derived from `options.seed`, so the
/// result is identical under sequential and parallel execution.
pub fn monte_carlo_ci(
    model: &ImpactModel,
    dates: &[NaiveDate],
    options: &McOptions,
) -> Result<ImpactSeries, ImpactError> {
    let mut dates = dates.to_vec();
    dates.sort();
    dates.dedup();
    let factual = predict_factual(model, &dates)?;
    let counterfactual = predict_counterfactual(model, &dates)?;
    let point = compute_impact(&factual, &counterfactual)?;

    let cov = &model.param_cov;
    let dim = cov.nrows();
    if dim != model.params().len() {
        return Err(ImpactError::Invalid("parameter covariance has the wrong dimension".into()));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    if dim > 0 {
        let eig = sym.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        if eig.eigenvalues.iter().any(|v| *v < -1e-8 * scale.max(f64::MIN_POSITIVE)) {
            return Err(ImpactError::CovarianceNotPsd);
        }
    }
    let factor = linalg::psd_factor(&sym);
    let mean = model.params();

    // Index of the shock coefficient driving each date (None outside the shock year).
    let shock_idx: Vec<Option<usize>> = dates
        .iter()
        .map(|d| (d.year() == model.shock_year).then(|| model.term_index(Term::ShockWeek(week_of_year(*d)))).flatten())
        .collect();

    let base: Vec<f64> = dates.iter().map(|d| model.deterministic(*d, false)).collect::<Result<_, _>>()?;
    let smear = 0.5 * model.retransform_var;

    let n_draws = options.n_draws;
    let reject_cap = (MAX_REJECTION_SHARE * n_draws as f64).floor() as usize;
    let max_attempts = reject_cap + 1;
    let results: Vec<(Option<Vec<f64>>, usize)> = options.exec.map(n_draws, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(i as u64);
        let mut rejected = 0;
        loop {
            let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let draw = &mean + &factor * z;
            if admissible(model, &draw) {
                // only the shock coefficients survive the ratio exp(a + γ* + s²/2) / exp(a + s²/2)
                let l = shock_idx
                    .iter()
                    .zip(&base)
                    .zip(&counterfactual)
                    .map(|((idx, a), &(_, cf))| idx.map_or(0.0, |j| 100.0 * ((a + draw[j] + smear).exp() - cf) / cf))
                    .collect();
                return (Some(l), rejected);
            }
            rejected += 1;
            if rejected >= max_attempts {
                return (None, rejected);
            }
        }
    });
    let rejected: usize = results.iter().map(|r| r.1).sum();
    if rejected > reject_cap || results.iter().any(|r| r.0.is_none()) {
        return Err(ImpactError::CovariancePathology { rejected, attempted: n_draws + rejected });
    }
    let values: Vec<Vec<f64>> = results.into_iter().map(|r| r.0.expect("checked above")).collect();

    let mut daily = Vec::with_capacity(dates.len());
    let mut column = vec![0.0; n_draws];
    for (t, &(date, l)) in point.iter().enumerate() {
        for (c, v) in column.iter_mut().zip(&values) {
            *c = v[t];
        }
        let (lo, hi) = if n_draws == 0 { (l, l) } else { interval95(&mut column) };
        daily.push(DailyImpact { date, impact: l, lo95: lo.min(l), hi95: hi.max(l) });
    }

    let mut weekly = Vec::new();
    for (week, idx) in week_groups(&dates) {
        let m = idx.len() as f64;
        let impact = idx.iter().map(|&t| point[t].1).sum::<f64>() / m;
        for (c, v) in column.iter_mut().zip(&values) {
            *c = idx.iter().map(|&t| v[t]).sum::<f64>() / m;
        }
        let (lo, hi) = if n_draws == 0 { (impact, impact) } else { interval95(&mut column) };
        weekly.push(WeeklyImpact { week, impact, lo95: lo.min(impact), hi95: hi.max(impact) });
    }

    Ok(ImpactSeries {
        meta: SeriesMeta {
            estimator: model.estimator.to_string(),
            order: model.order,
            seed: options.seed,
            n_draws,
            ..SeriesMeta::default()
        },
        daily,
        weekly,
        factual,
        counterfactual,
        draws: ImpactDraws { dates, values },
        rejected,
    })
}
