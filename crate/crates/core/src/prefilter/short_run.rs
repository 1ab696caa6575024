use chrono::{NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::PrefilterError;
use crate::calendar::{weekday_tag, HolidayType};
use crate::ingest::DailyObservation;
use crate::linalg;

/// First day treated as shocked in the default configuration.
pub const DEFAULT_SHOCK_DATE: NaiveDate = match NaiveDate::from_ymd_opt(2020, 3, 3) {
    Some(d) => d,
    None => panic!("invalid default shock date"),
};

/// Candidate breakpoints for the temperature hinge, in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakpointGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for BreakpointGrid {
    fn default() -> Self {
        BreakpointGrid { lo: 5.0, hi: 25.0, step: 0.5 }
    }
}

impl BreakpointGrid {
    pub fn candidates(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// Fitted short-run model: intercept, hinge temperature response, weekday
/// and holiday effects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortRunModel {
    pub delta0: f64,
    /// Slope below the breakpoint.
    pub delta1: f64,
    /// Change in slope above the breakpoint; 0 when the hinge is unidentified.
    pub delta2: f64,
    /// Breakpoint; `None` when no candidate lies inside the observed range.
    pub k: Option<f64>,
    /// Effects of non-baseline weekdays (Monday is the baseline).
    pub weekday_effects: Vec<(Weekday, f64)>,
    /// Effects in [`HolidayType::EFFECTS`] order; dropped columns hold 0.
    pub holiday_effects: [f64; 6],
    pub coefficients: Vec<Coefficient>,
    pub dropped: Vec<String>,
    pub residual_sd: f64,
    pub ssr: f64,
    pub n_obs: usize,
    pub fit_window: (NaiveDate, NaiveDate),
    pub grid: BreakpointGrid,
}

impl ShortRunModel {
    /// Temperature part of the prediction; continuous at `k`.
    pub fn temperature_response(&self, temp: f64) -> f64 {
        let hinge = self.k.map(|k| (temp - k).max(0.0)).unwrap_or(0.0);
        self.delta1 * temp + self.delta2 * hinge
    }

    pub fn weekday_effect(&self, day: Weekday) -> Option<f64> {
        if day == Weekday::Mon {
            return Some(0.0);
        }
        self.weekday_effects.iter().find(|(d, _)| *d == day).map(|(_, v)| *v)
    }

    pub fn holiday_effect(&self, h: HolidayType) -> f64 {
        HolidayType::EFFECTS.iter().position(|x| *x == h).map(|i| self.holiday_effects[i]).unwrap_or(0.0)
    }

    pub fn predict(&self, obs: &DailyObservation) -> Result<f64, PrefilterError> {
        let wd = self.weekday_effect(obs.weekday).ok_or_else(|| {
            PrefilterError::Invalid(format!(
                "{}: weekday {} was not in the fit sample",
                obs.date,
                weekday_tag(obs.weekday)
            ))
        })?;
        Ok(self.delta0 + self.temperature_response(obs.temp) + wd + self.holiday_effect(obs.holiday_type))
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

const WEEKDAY_COLUMNS: [Weekday; 6] =
    [Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun];

struct Design {
    x: DMatrix<f64>,
    names: Vec<String>,
    weekdays: Vec<Weekday>,
}

fn design(obs: &[&DailyObservation], k: Option<f64>) -> Design {
    let weekdays: Vec<Weekday> = WEEKDAY_COLUMNS
        .iter()
        .copied()
        .filter(|d| {
            matches!(d, Weekday::Tue | Weekday::Wed | Weekday::Thu | Weekday::Fri)
                || obs.iter().any(|o| o.weekday == *d)
        })
        .collect();
    let mut names = vec!["const".to_string(), "temp".to_string()];
    if k.is_some() {
        names.push("temp_above_k".to_string());
    }
    names.extend(weekdays.iter().map(|d| format!("weekday_{}", weekday_tag(*d))));
    names.extend(HolidayType::EFFECTS.iter().map(|h| format!("holiday_{h}")));

    let ncol = names.len();
    let mut x = DMatrix::zeros(obs.len(), ncol);
    for (i, o) in obs.iter().enumerate() {
        let mut c = 0;
        x[(i, c)] = 1.0;
        c += 1;
        x[(i, c)] = o.temp;
        c += 1;
        if let Some(k) = k {
            x[(i, c)] = (o.temp - k).max(0.0);
            c += 1;
        }
        for d in &weekdays {
            x[(i, c)] = f64::from(o.weekday == *d);
            c += 1;
        }
        for h in HolidayType::EFFECTS {
            x[(i, c)] = f64::from(o.holiday_type == h);
            c += 1;
        }
    }
    Design { x, names, weekdays }
}

/// Fit the short-run model on observations strictly before `shock_date`,
/// choosing the breakpoint by profile grid search on the residual sum of
/// squares (ties go to the lower breakpoint).
pub fn fit_short_run(
    series: &[DailyObservation],
    shock_date: NaiveDate,
    grid: BreakpointGrid,
) -> Result<ShortRunModel, PrefilterError> {
    let mut fit_obs: Vec<&DailyObservation> = series.iter().filter(|o| o.date < shock_date).collect();
    fit_obs.sort_by_key(|o| o.date);
    let (first, last) = match (fit_obs.first(), fit_obs.last()) {
        (Some(f), Some(l)) => (f.date, l.date),
        _ => return Err(PrefilterError::InsufficientData("no observations before the shock date".into())),
    };
    if (last - first).num_days() < 730 {
        return Err(PrefilterError::InsufficientData(format!(
            "pre-shock sample {first}..{last} spans less than two years"
        )));
    }
    if fit_obs.iter().any(|o| !o.log_load.is_finite() || !o.temp.is_finite()) {
        return Err(PrefilterError::Invalid("non-finite log load or temperature".into()));
    }
    let y = DVector::from_iterator(fit_obs.len(), fit_obs.iter().map(|o| o.log_load));
    let tmin = fit_obs.iter().map(|o| o.temp).fold(f64::INFINITY, f64::min);
    let tmax = fit_obs.iter().map(|o| o.temp).fold(f64::NEG_INFINITY, f64::max);

    let mut best: Option<(f64, linalg::OlsFit, Design)> = None;
    for k in grid.candidates().into_iter().filter(|k| *k > tmin && *k < tmax) {
        let d = design(&fit_obs, Some(k));
        let fit = linalg::ols(&d.x, &y)?;
        // the hinge column is index 2; a dropped hinge is not a valid candidate
        if fit.is_dropped(2) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, b, _)) => fit.ssr < b.ssr - 1e-12 * b.ssr.max(f64::MIN_POSITIVE),
        };
        if better {
            best = Some((k, fit, d));
        }
    }

    let (k, fit, d, mut dropped) = match best {
        Some((k, fit, d)) => (Some(k), fit, d, Vec::new()),
        None => {
            let d = design(&fit_obs, None);
            let fit = linalg::ols(&d.x, &y)?;
            (None, fit, d, vec!["temp_above_k".to_string()])
        }
    };
    dropped.extend(fit.dropped.iter().map(|&j| d.names[j].clone()));

    let coef = |name: &str| d.names.iter().position(|n| n == name).map(|j| fit.coef[j]).unwrap_or(0.0);
    let weekday_effects =
        d.weekdays.iter().map(|day| (*day, coef(&format!("weekday_{}", weekday_tag(*day))))).collect();
    let mut holiday_effects = [0.0; 6];
    for (i, h) in HolidayType::EFFECTS.iter().enumerate() {
        holiday_effects[i] = coef(&format!("holiday_{h}"));
    }
    let coefficients = fit
        .kept
        .iter()
        .map(|&j| Coefficient { name: d.names[j].clone(), estimate: fit.coef[j], std_error: fit.se[j] })
        .collect();
    Ok(ShortRunModel {
        delta0: coef("const"),
        delta1: coef("temp"),
        delta2: coef("temp_above_k"),
        k,
        weekday_effects,
        holiday_effects,
        coefficients,
        dropped,
        residual_sd: fit.sigma2.sqrt(),
        ssr: fit.ssr,
        n_obs: fit_obs.len(),
        fit_window: (first, last),
        grid,
    })
}

/// Short-term adjusted load: observed log load minus the short-run
/// prediction, over the whole sample including post-shock dates.
pub fn short_term_adjust(
    series: &[DailyObservation],
    model: &ShortRunModel,
) -> Result<Vec<(NaiveDate, f64)>, PrefilterError> {
    series.iter().map(|o| Ok((o.date, o.log_load - model.predict(o)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::HolidayType as H;
    use chrono::Datelike;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn shock() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 3).unwrap()
    }

    /// Independent generator for the short-run structure.
    fn simulate(seed: u64, noise: f64, temp_amp: f64) -> Vec<DailyObservation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta_w = [0.02, 0.03, 0.025, -0.01];
        let beta_h = [-0.15, -0.08, -0.07, -0.25, -0.22, -0.12];
        let mut out = Vec::new();
        let mut date = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2020, 6, 30).unwrap();
        let mut i = 0usize;
        while date <= end {
            if date.weekday().num_days_from_monday() < 5 {
                let doy = date.ordinal() as f64;
                let temp = 12.0
                    + temp_amp * (2.0 * std::f64::consts::PI * (doy - 200.0) / 365.25).cos()
                    + 2.0 * rng.sample::<f64, _>(StandardNormal);
                let wd = date.weekday().num_days_from_monday() as usize;
                // cycle holiday types on a sparse set of days so every type occurs
                let holiday_type = if i % 37 == 5 { H::EFFECTS[(i / 37) % 6] } else { H::None };
                let mut y = 4.0 - 0.01 * temp + 0.02 * (temp - 16.0).max(0.0);
                if wd > 0 {
                    y += beta_w[wd - 1];
                }
                if let Some(p) = H::EFFECTS.iter().position(|h| *h == holiday_type) {
                    y += beta_h[p];
                }
                y += noise * rng.sample::<f64, _>(StandardNormal);
                out.push(DailyObservation {
                    date,
                    log_load: y,
                    temp,
                    weekday: date.weekday(),
                    holiday_type,
                    lockdown: false,
                });
                i += 1;
            }
            date = date.succ_opt().unwrap();
        }
        out
    }

    #[test]
    fn constant_series_gives_zero_slopes() {
        let mut s = simulate(1, 0.0, 8.0);
        for o in &mut s {
            o.log_load = 7.5;
        }
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        assert!((m.delta0 - 7.5).abs() < 1e-10);
        assert!(m.delta1.abs() < 1e-10 && m.delta2.abs() < 1e-10);
        assert!(m.weekday_effects.iter().all(|(_, v)| v.abs() < 1e-10));
        assert!(m.holiday_effects.iter().all(|v| v.abs() < 1e-10));
        assert!(m.residual_sd < 1e-10);
    }

    #[test]
    fn recovers_generating_parameters() {
        let s = simulate(7, 0.001, 8.0);
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        let k = m.k.unwrap();
        assert!((k - 16.0).abs() <= 0.5, "k = {k}");
        let truth = [
            ("const", 4.0),
            ("temp", -0.01),
            ("temp_above_k", 0.02),
            ("weekday_tue", 0.02),
            ("weekday_wed", 0.03),
            ("weekday_thu", 0.025),
            ("weekday_fri", -0.01),
            ("holiday_generic", -0.15),
            ("holiday_gap_to_sunday", -0.08),
            ("holiday_gap_to_saturday", -0.07),
            ("holiday_christmas", -0.25),
            ("holiday_new_year", -0.22),
            ("holiday_dec31", -0.12),
        ];
        for (name, value) in truth {
            let c = m.coefficient(name).unwrap();
            assert!(
                (c.estimate - value).abs() < 3.0 * c.std_error,
                "{name}: {} vs {value} (se {})",
                c.estimate,
                c.std_error
            );
        }
        assert!(m.dropped.is_empty());
        assert!(m.fit_window.1 < shock());
    }

    #[test]
    fn hinge_dropped_when_temperature_never_exceeds_grid() {
        let mut s = simulate(3, 0.001, 1.0);
        for o in &mut s {
            o.temp = o.temp - 12.0 - 3.0; // all below 5°C
            o.log_load = 4.0 - 0.01 * o.temp;
        }
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        assert_eq!(m.k, None);
        assert_eq!(m.delta2, 0.0);
        assert!(m.dropped.contains(&"temp_above_k".to_string()));
        assert!((m.delta1 + 0.01).abs() < 1e-10);
    }

    #[test]
    fn never_occurring_holiday_column_is_dropped() {
        let mut s = simulate(9, 0.01, 8.0);
        for o in &mut s {
            if o.holiday_type == H::GapToSaturday {
                o.holiday_type = H::None;
            }
        }
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        assert_eq!(m.dropped, vec!["holiday_gap_to_saturday".to_string()]);
        assert_eq!(m.holiday_effect(H::GapToSaturday), 0.0);
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let s = simulate(21, 0.02, 8.0);
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        let pre: Vec<&DailyObservation> = s.iter().filter(|o| o.date < shock()).collect();
        let d = design(&pre, m.k);
        let resid: Vec<f64> = pre.iter().map(|o| o.log_load - m.predict(o).unwrap()).collect();
        for j in 0..d.x.ncols() {
            let col = d.x.column(j);
            let ip: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            let scale = col.norm() * resid.iter().map(|r| r * r).sum::<f64>().sqrt();
            assert!(ip.abs() <= 1e-8 * scale.max(1e-300), "column {}: {ip}", d.names[j]);
        }
    }

    #[test]
    fn adjustment_of_own_fit_is_zero_and_level_model_shifts() {
        let s = simulate(4, 0.0, 8.0);
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        let fitted: Vec<DailyObservation> =
            s.iter().map(|o| DailyObservation { log_load: m.predict(o).unwrap(), ..*o }).collect();
        assert!(short_term_adjust(&fitted, &m).unwrap().iter().all(|(_, v)| v.abs() < 1e-12));

        let level = ShortRunModel {
            delta0: 2.0,
            delta1: 0.0,
            delta2: 0.0,
            weekday_effects: m.weekday_effects.iter().map(|(d, _)| (*d, 0.0)).collect(),
            holiday_effects: [0.0; 6],
            ..m.clone()
        };
        for ((_, adj), o) in short_term_adjust(&s, &level).unwrap().iter().zip(&s) {
            assert!((adj - (o.log_load - 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn injected_post_shock_dip_survives_adjustment() {
        let mut s = simulate(12, 0.001, 8.0);
        for o in &mut s {
            if o.date >= shock() {
                o.log_load -= 0.10;
            }
        }
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        let adj = short_term_adjust(&s, &m).unwrap();
        let pre: Vec<f64> = adj.iter().filter(|(d, _)| *d < shock()).map(|x| x.1).collect();
        let post: Vec<f64> = adj.iter().filter(|(d, _)| *d >= shock()).map(|x| x.1).collect();
        assert!(linalg::mean(&pre).abs() < 1e-3);
        assert!((linalg::mean(&post) + 0.10).abs() < 2e-3, "{}", linalg::mean(&post));
    }

    #[test]
    fn continuity_at_breakpoint() {
        let s = simulate(2, 0.005, 8.0);
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();
        let k = m.k.unwrap();
        let below = m.temperature_response(k - 1e-9);
        let above = m.temperature_response(k + 1e-9);
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn constant_shift_and_row_order_invariance() {
        let s = simulate(31, 0.01, 8.0);
        let m = fit_short_run(&s, shock(), BreakpointGrid::default()).unwrap();

        let shifted: Vec<_> = s.iter().map(|o| DailyObservation { log_load: o.log_load + 3.0, ..*o }).collect();
        let ms = fit_short_run(&shifted, shock(), BreakpointGrid::default()).unwrap();
        assert!((ms.delta0 - m.delta0 - 3.0).abs() < 1e-9);
        assert_eq!(ms.k, m.k);
        assert!((ms.delta1 - m.delta1).abs() < 1e-10);
        let a = short_term_adjust(&s, &m).unwrap();
        let b = short_term_adjust(&shifted, &ms).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x.1 - y.1).abs() < 1e-9));

        let mut reversed = s.clone();
        reversed.reverse();
        let mr = fit_short_run(&reversed, shock(), BreakpointGrid::default()).unwrap();
        assert_eq!(mr.k, m.k);
        for (c1, c2) in m.coefficients.iter().zip(&mr.coefficients) {
            assert!((c1.estimate - c2.estimate).abs() < 1e-10);
        }
    }

    #[test]
    fn short_sample_rejected() {
        let s: Vec<_> = simulate(1, 0.01, 8.0).into_iter().filter(|o| o.date.year() >= 2019).collect();
        assert!(matches!(
            fit_short_run(&s, shock(), BreakpointGrid::default()),
            Err(PrefilterError::InsufficientData(_))
        ));
    }
}
