//! End-to-end run for one country: prefilter, impact model, Monte Carlo
//! intervals, diagnostics and GDP aggregation.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::diagnostics::{
    self, placebo_pre_outbreak, placebo_shift_year, DiagnosticsError, DiagnosticsReport, DEFAULT_ALPHAS, DEFAULT_LB_LAG,
};
use crate::gdp::{gdp_impacts, GdpError, GdpImpactSeries};
use crate::impact::{
    add_year_effect_error, fit_impact_model, monte_carlo_ci, select_arma_order, Estimator, FitOptions, ImpactError,
    ImpactModel, ImpactSeries, InformationCriterion, McOptions, OrderSelection,
};
use crate::ingest::{
    aggregate_daily, build_daily_series, AggregationMode, CountryConfig, DailyObservation, DayFilter, GapReport,
    HourlyLoadRecord, IngestError,
};
use crate::prefilter::{
    fit_short_run, fit_year_effects, long_run_adjust, short_term_adjust, BreakpointGrid, PrefilterError, ShortRunModel,
    YearEffects, YearWindowMode, DEFAULT_SHOCK_DATE,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Prefilter(#[from] PrefilterError),
    #[error(transparent)]
    Impact(#[from] ImpactError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Gdp(#[from] GdpError),
}

/// Day selection and daily aggregation of the robustness variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum Mode {
    /// Weekdays, 24-hour mean load.
    #[default]
    Weekdays,
    /// Weekends kept, with weekend dummies in the short-run model.
    AllDays,
    /// Weekdays, mean load over 08:00–18:00.
    PeakOnly,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Weekdays, Mode::AllDays, Mode::PeakOnly];

    pub fn day_filter(self) -> DayFilter {
        match self {
            Mode::AllDays => DayFilter::AllDays,
            _ => DayFilter::WeekdaysOnly,
        }
    }

    pub fn aggregation(self) -> AggregationMode {
        match self {
            Mode::PeakOnly => AggregationMode::PeakHours,
            _ => AggregationMode::AllHours,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Weekdays => "weekdays",
            Mode::AllDays => "all_days",
            Mode::PeakOnly => "peak_only",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weekdays" => Ok(Mode::Weekdays),
            "all_days" => Ok(Mode::AllDays),
            "peak_only" => Ok(Mode::PeakOnly),
            other => Err(format!("unknown mode `{other}` (expected weekdays, all_days or peak_only)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub shock_date: NaiveDate,
    pub estimator: Estimator,
    /// Overrides the country's configured ARMA order; `None` falls back to
    /// the configuration, then to selection.
    pub order: Option<(usize, usize)>,
    pub max_order: (usize, usize),
    pub criterion: InformationCriterion,
    pub grid: BreakpointGrid,
    pub year_window: YearWindowMode,
    pub fit: FitOptions,
    pub mc: McOptions,
    pub alphas: Vec<f64>,
    pub ljung_box_lag: usize,
    /// Pseudo shock year of the second placebo test; `None` skips it.
    pub placebo_year: Option<i32>,
    /// Carry the estimation error of the year levels into the regression
    /// covariance instead of treating them as known.
    pub year_effect_uncertainty: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            shock_date: DEFAULT_SHOCK_DATE,
            estimator: Estimator::MlArma,
            order: None,
            max_order: (5, 2),
            criterion: InformationCriterion::Aic,
            grid: BreakpointGrid::default(),
            year_window: YearWindowMode::Weekdays,
            fit: FitOptions::default(),
            mc: McOptions::default(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            ljung_box_lag: DEFAULT_LB_LAG,
            placebo_year: Some(DEFAULT_SHOCK_DATE.year() - 1),
            year_effect_uncertainty: true,
        }
    }
}

/// Output of the estimation stages.
#[derive(Debug, Clone)]
pub struct CountryFit {
    pub series: Vec<DailyObservation>,
    pub short_run: ShortRunModel,
    pub year_effects: YearEffects,
    /// Prefiltered series (dependent variable of the impact model).
    pub adjusted: Vec<(NaiveDate, f64)>,
    pub model: ImpactModel,
    pub order_selection: Option<OrderSelection>,
    pub warnings: Vec<String>,
}

impl CountryFit {
    /// Sum of the three deterministic parts for each modeled day, on the log scale.
    pub fn full_prediction(&self) -> Result<Vec<(NaiveDate, f64)>, PipelineError> {
        let by_date: BTreeMap<NaiveDate, &DailyObservation> = self.series.iter().map(|o| (o.date, o)).collect();
        self.adjusted
            .iter()
            .map(|(d, _)| {
                let obs = by_date[d];
                let alpha = self.year_effects.effect(d.year()).ok_or(PrefilterError::YearOutsideSpan(d.year()))?;
                Ok((*d, self.short_run.predict(obs)? + alpha + self.model.deterministic(*d, true)?))
            })
            .collect()
    }
}

/// Estimate the prefilter and impact model. Observations after the shock
/// year are ignored.
pub fn fit_country(
    series: &[DailyObservation],
    config: &CountryConfig,
    options: &PipelineOptions,
) -> Result<CountryFit, PipelineError> {
    let shock_year = options.shock_date.year();
    let mut series: Vec<DailyObservation> = series.iter().filter(|o| o.date.year() <= shock_year).cloned().collect();
    series.sort_by_key(|o| o.date);

    let short_run = fit_short_run(&series, options.shock_date, options.grid)?;
    let stage1 = short_term_adjust(&series, &short_run)?;
    let year_effects = fit_year_effects(&stage1, shock_year, options.year_window)?;
    let adjusted = long_run_adjust(&stage1, &year_effects)?;

    let mut warnings = Vec::new();
    let mut order_selection = None;
    let order = match options.order.or(config.arma_order) {
        Some(o) => o,
        None if options.estimator == Estimator::OlsHac => (0, 0),
        None => {
            let ols = fit_impact_model(&adjusted, (0, 0), Estimator::OlsHac, shock_year, &options.fit)?;
            let resid: Vec<f64> = ols.residuals.iter().map(|r| r.1).collect();
            let (mp, mq) = options.max_order;
            let sel = select_arma_order(&resid, mp, mq, options.criterion, &options.fit)?;
            let o = sel.order;
            order_selection = Some(sel);
            o
        }
    };
    // a selected order whose final fit lands on the boundary gives way to the
    // next-ranked candidate
    let mut candidates = vec![order];
    if let Some(sel) = &order_selection {
        let mut ranked: Vec<((usize, usize), f64)> =
            sel.table.iter().filter_map(|(o, v)| v.map(|v| (*o, v))).filter(|(o, _)| *o != order).collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
        candidates.extend(ranked.into_iter().map(|r| r.0));
    }
    let mut model = None;
    for (rank, o) in candidates.iter().enumerate() {
        match fit_impact_model(&adjusted, *o, options.estimator, shock_year, &options.fit) {
            Ok(m) => model = Some(m),
            Err(ImpactError::NonConvergence { best, grad_norm }) => {
                warnings.push(format!(
                    "optimizer stopped before convergence (gradient norm {grad_norm:.3e}); best candidate kept"
                ));
                model = Some(*best);
            }
            Err(ImpactError::StationarityViolation) if rank + 1 < candidates.len() => {
                warnings.push(format!("ARMA{o:?} fit reached the stationarity boundary; trying the next-ranked order"));
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        break;
    }
    let mut model = model.ok_or(ImpactError::StationarityViolation)?;
    if options.year_effect_uncertainty {
        let windows = year_effects.window_dates(&stage1);
        add_year_effect_error(&mut model, &adjusted, &windows, year_effects.base_year)?;
    }
    Ok(CountryFit { series, short_run, year_effects, adjusted, model, order_selection, warnings })
}

/// Everything produced for one country.
#[derive(Debug, Clone)]
pub struct CountryRun {
    pub country: String,
    pub mode: Mode,
    pub fit: CountryFit,
    pub impact: ImpactSeries,
    pub gdp: GdpImpactSeries,
    pub diagnostics: DiagnosticsReport,
    pub gaps: GapReport,
}

/// Build the modeled series from hourly records for `mode`.
pub fn prepare_series(
    hourly: &[HourlyLoadRecord],
    temps: &[(NaiveDate, f64)],
    config: &CountryConfig,
    mode: Mode,
) -> Result<(Vec<DailyObservation>, GapReport), PipelineError> {
    let daily = aggregate_daily(hourly, mode.aggregation())?;
    Ok(build_daily_series(&daily, temps, config, mode.day_filter())?)
}

/// Full run on a prepared series.
pub fn run_country(
    series: &[DailyObservation],
    gaps: GapReport,
    config: &CountryConfig,
    mode: Mode,
    options: &PipelineOptions,
) -> Result<CountryRun, PipelineError> {
    let fit = fit_country(series, config, options)?;
    let shock_year = options.shock_date.year();
    let dates: Vec<NaiveDate> = fit.adjusted.iter().map(|o| o.0).filter(|d| d.year() == shock_year).collect();
    let mut impact = monte_carlo_ci(&fit.model, &dates, &options.mc)?;
    impact.meta.country = config.country.clone();
    impact.meta.mode = mode.to_string();
    let gdp = gdp_impacts(&impact, config, options.mc.exec)?;

    let m = &fit.model;
    let fitted_params = if m.estimator == Estimator::MlArma { m.phi.len() + m.theta.len() } else { 0 };
    let ljung_box = (m.sigma2 > 0.0)
        .then(|| diagnostics::ljung_box(&m.innovations, options.ljung_box_lag, fitted_params))
        .transpose()?;
    let apf_r2 = diagnostics::fit_r2(&fit.adjusted, m).ok();
    let raw: Vec<(NaiveDate, f64)> = {
        let by_date: BTreeMap<NaiveDate, f64> = fit.series.iter().map(|o| (o.date, o.log_load)).collect();
        fit.adjusted.iter().map(|(d, _)| (*d, by_date[d])).collect()
    };
    let total_r2 = diagnostics::total_r2(&raw, &fit.full_prediction()?).ok();
    let placebo1 = Some(placebo_pre_outbreak(m, &options.alphas)?);
    let placebo2 = match options.placebo_year {
        Some(y) => Some(placebo_shift_year(series, config, options, y)?),
        None => None,
    };
    let diagnostics = DiagnosticsReport {
        country: config.country.clone(),
        order: m.order,
        ljung_box,
        apf_r2,
        total_r2,
        placebo1,
        placebo2,
    };
    Ok(CountryRun { country: config.country.clone(), mode, fit, impact, gdp, diagnostics, gaps })
}
