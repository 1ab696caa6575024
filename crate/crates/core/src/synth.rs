//! Synthetic load data with known ground truth.
//!
//! The generator builds daily log load as the sum of a temperature/calendar
//! component, a yearly level, a week-of-year profile, an injected shock
//! and ARMA noise, then spreads each day over 24 hourly readings. Ground-truth
//! impacts are computed here from the injected log-impacts directly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{week_of_year, HolidayCalendar, HolidayType, YearWeek};
use crate::impact::arma;
use crate::ingest::{CalendarFile, CountryConfig, HourlyLoadRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("AR coefficients are not stationary")]
    NonStationary,
    #[error("MA coefficients are not invertible")]
    NonInvertible,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters of the short-run (temperature and calendar) component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eq1Params {
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub k: f64,
    /// Tuesday..Friday, relative to Monday.
    pub weekday: [f64; 4],
    /// Saturday, Sunday.
    pub weekend: [f64; 2],
    /// In [`HolidayType::EFFECTS`] order.
    pub holiday: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaSpec {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureProcess {
    pub mean: f64,
    pub amplitude: f64,
    /// Day of year of the seasonal maximum.
    pub peak_day: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockWeek {
    pub week: u32,
    pub log_impact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub country: String,
    pub seed: u64,
    pub start_year: i32,
    pub end_date: NaiveDate,
    pub eq1: Eq1Params,
    /// One level per year from `start_year` to the final year.
    pub year_levels: Vec<f64>,
    /// 52 week-of-year effects.
    pub weekly_profile: Vec<f64>,
    pub arma: ArmaSpec,
    /// Log-impacts by week of the final year.
    pub shock: Vec<ShockWeek>,
    pub temperature: TemperatureProcess,
    pub residential_share: f64,
    pub lockdown_start: Option<NaiveDate>,
    pub lockdown_end: Option<NaiveDate>,
    /// Standard deviation of multiplicative noise on each hourly reading.
    pub hourly_noise_sd: f64,
    /// ARMA order written into the generated configuration.
    pub config_order: Option<(usize, usize)>,
}

impl SynthSpec {
    /// A realistic default: 2015 through Aug 28 2020, AR(1) noise, shock of
    /// −0.12 in weeks 12–20, residential share 30% and a lockdown from
    /// Mar 16 to May 10.
    pub fn example(country: &str, seed: u64) -> Self {
        let weekly_profile = (1..=52)
            .map(|w| {
                // sine around the temperature peak: orthogonal to the cosine-shaped temperature
                let doy = 7.0 * w as f64 - 3.5;
                0.03 * (2.0 * PI * (doy - 200.0) / 365.25).sin()
            })
            .collect();
        SynthSpec {
            country: country.to_string(),
            seed,
            start_year: 2015,
            end_date: ymd(2020, 8, 28),
            eq1: Eq1Params {
                delta0: 10_000f64.ln(),
                delta1: -0.01,
                delta2: 0.02,
                k: 16.0,
                weekday: [0.02, 0.025, 0.02, 0.0],
                weekend: [-0.12, -0.18],
                holiday: [-0.15, -0.05, -0.05, -0.20, -0.20, -0.10],
            },
            year_levels: vec![0.02, 0.01, 0.0, -0.01, -0.02, 0.0],
            weekly_profile,
            arma: ArmaSpec { phi: vec![0.6], theta: vec![], sigma: 0.01 },
            shock: (12..=20).map(|week| ShockWeek { week, log_impact: -0.12 }).collect(),
            temperature: TemperatureProcess { mean: 11.0, amplitude: 9.0, peak_day: 200.0, noise_sd: 2.0 },
            residential_share: 30.0,
            lockdown_start: Some(ymd(2020, 3, 16)),
            lockdown_end: Some(ymd(2020, 5, 10)),
            hourly_noise_sd: 0.002,
            config_order: Some((1, 0)),
        }
    }

    /// No disturbances of any kind, no yearly or weekly structure and no shock.
    pub fn noiseless_null(country: &str, seed: u64) -> Self {
        let mut s = SynthSpec::example(country, seed);
        s.year_levels = vec![0.0; s.year_levels.len()];
        s.weekly_profile = vec![0.0; 52];
        s.arma.sigma = 0.0;
        s.shock.clear();
        s.hourly_noise_sd = 0.0;
        s
    }

    pub fn final_year(&self) -> i32 {
        self.end_date.year()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !arma::is_stationary(&self.arma.phi) {
            return Err(SynthError::NonStationary);
        }
        if !arma::is_invertible(&self.arma.theta) {
            return Err(SynthError::NonInvertible);
        }
        let years = (self.final_year() - self.start_year + 1).max(0) as usize;
        if years == 0 {
            return Err(SynthError::Invalid("end date precedes the start year".into()));
        }
        if self.year_levels.len() != years {
            return Err(SynthError::Invalid(format!("{} year levels for {years} years", self.year_levels.len())));
        }
        if self.weekly_profile.len() != 52 {
            return Err(SynthError::Invalid("weekly profile needs 52 values".into()));
        }
        let last_week = week_of_year(self.end_date);
        if let Some(s) = self.shock.iter().find(|s| s.week == 0 || s.week > last_week.max(1)) {
            return Err(SynthError::Invalid(format!("shock week {} outside the final year's data", s.week)));
        }
        if !(self.arma.sigma >= 0.0 && self.hourly_noise_sd >= 0.0 && self.temperature.noise_sd >= 0.0) {
            return Err(SynthError::Invalid("negative noise scale".into()));
        }
        if !(0.0..100.0 / 1.4).contains(&self.residential_share) {
            return Err(SynthError::Invalid(format!("residential share {}", self.residential_share)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Invalid(e.to_string()))
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Known impacts for one day of the final year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthDay {
    pub date: NaiveDate,
    pub load_pct: f64,
    pub gdp_pct: f64,
    pub lockdown: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthWeek {
    pub week: YearWeek,
    pub load_pct: f64,
    pub gdp_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub daily: Vec<TruthDay>,
    /// Weekday averages per week.
    pub weekly: Vec<TruthWeek>,
}

impl GroundTruth {
    pub fn week(&self, week: YearWeek) -> Option<&TruthWeek> {
        self.weekly.iter().find(|w| w.week == week)
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub config: CountryConfig,
    pub hourly: Vec<HourlyLoadRecord>,
    pub temperature: Vec<(NaiveDate, f64)>,
    /// Daily log load before the hourly split.
    pub daily_log_load: Vec<(NaiveDate, f64)>,
    pub truth: GroundTruth,
}

/// Holidays of the synthetic country: May 1, Aug 15, Nov 1 and Easter-like
/// Mondays, plus the derived gap days.
fn holiday_calendar(start_year: i32, end: NaiveDate) -> HolidayCalendar {
    let mut cal = HolidayCalendar::default();
    for y in start_year..=end.year() {
        // a movable spring Monday between Mar 23 and Apr 26
        let spring = ymd(y, 3, 23) + chrono::Duration::weeks(((y * 3) % 5) as i64);
        let spring = spring + chrono::Duration::days((7 - spring.weekday().num_days_from_monday() as i64) % 7);
        for d in [spring, ymd(y, 5, 1), ymd(y, 8, 15), ymd(y, 11, 1)] {
            if d <= end {
                cal.generic.push(d);
            }
        }
    }
    cal.generic.sort();
    cal.derive_gap_days();
    cal
}

fn weekday_effect(p: &Eq1Params, day: Weekday) -> f64 {
    match day {
        Weekday::Mon => 0.0,
        Weekday::Tue => p.weekday[0],
        Weekday::Wed => p.weekday[1],
        Weekday::Thu => p.weekday[2],
        Weekday::Fri => p.weekday[3],
        Weekday::Sat => p.weekend[0],
        Weekday::Sun => p.weekend[1],
    }
}

/// Hourly load profile with mean one over the day.
fn hourly_shape() -> [f64; 24] {
    let mut s = [0.0; 24];
    for (h, v) in s.iter_mut().enumerate() {
        let x = h as f64;
        *v = 1.0 + 0.15 * (2.0 * PI * (x - 14.0) / 24.0).cos() + 0.05 * (4.0 * PI * (x - 9.0) / 24.0).cos();
    }
    let mean = s.iter().sum::<f64>() / 24.0;
    s.iter_mut().for_each(|v| *v /= mean);
    s
}

/// Generate the dataset. Identical specs give bitwise identical output.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = ymd(spec.start_year, 1, 1);
    let dates: Vec<NaiveDate> = start.iter_days().take_while(|d| *d <= spec.end_date).collect();
    let holidays = holiday_calendar(spec.start_year, spec.end_date);
    let final_year = spec.final_year();
    let shocks: BTreeMap<u32, f64> = spec.shock.iter().map(|s| (s.week, s.log_impact)).collect();

    let tp = &spec.temperature;
    let temp_noise = Normal::new(0.0, tp.noise_sd).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let temperature: Vec<(NaiveDate, f64)> = dates
        .iter()
        .map(|d| {
            let cycle = (2.0 * PI * (d.ordinal() as f64 - tp.peak_day) / 365.25).cos();
            (*d, tp.mean + tp.amplitude * cycle + temp_noise.sample(&mut rng))
        })
        .collect();

    // ARMA noise runs over weekdays; weekend days get independent draws with the same variance
    let weekdays = dates.iter().filter(|d| d.weekday().num_days_from_monday() < 5).count();
    let burn = 200;
    let shocks_wd: Vec<f64> =
        (0..weekdays + burn).map(|_| spec.arma.sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let noise_wd = arma::simulate(&spec.arma.phi, &spec.arma.theta, &shocks_wd, burn);
    let weekend_sd = spec.arma.sigma * unconditional_sd(&spec.arma.phi, &spec.arma.theta);

    let p = &spec.eq1;
    let mut wd_idx = 0;
    let mut daily_log_load = Vec::with_capacity(dates.len());
    for (d, temp) in &temperature {
        let hol = holidays.classify(*d);
        let hol_effect = HolidayType::EFFECTS.iter().position(|h| *h == hol).map_or(0.0, |i| p.holiday[i]);
        let short_run =
            p.delta0 + p.delta1 * temp + p.delta2 * (temp - p.k).max(0.0) + weekday_effect(p, d.weekday()) + hol_effect;
        let level = spec.year_levels[(d.year() - spec.start_year) as usize];
        let week = week_of_year(*d);
        let seasonal = spec.weekly_profile[(week - 1) as usize];
        let shock = if d.year() == final_year { shocks.get(&week).copied().unwrap_or(0.0) } else { 0.0 };
        let noise = if d.weekday().num_days_from_monday() < 5 {
            wd_idx += 1;
            noise_wd[wd_idx - 1]
        } else {
            weekend_sd * rng.sample::<f64, _>(StandardNormal)
        };
        daily_log_load.push((*d, short_run + level + seasonal + shock + noise));
    }

    let shape = hourly_shape();
    let mut hourly = Vec::with_capacity(dates.len() * 24);
    for (d, y) in &daily_log_load {
        let base = y.exp();
        for (h, s) in shape.iter().enumerate() {
            let eps = spec.hourly_noise_sd * rng.sample::<f64, _>(StandardNormal);
            hourly.push(HourlyLoadRecord {
                country: spec.country.clone(),
                timestamp: d.and_hms_opt(h as u32, 0, 0).expect("valid hour"),
                load: Some(base * s * eps.exp()),
            });
        }
    }

    let mut config = CountryConfig::new(&spec.country, spec.residential_share);
    config.lockdown_start = spec.lockdown_start;
    config.lockdown_end = spec.lockdown_end;
    config.arma_order = spec.config_order;
    config.capital_station = format!("{}-capital", spec.country);
    config.holidays = holidays;

    let truth = ground_truth(spec, &dates);
    Ok(SynthDataset { spec: spec.clone(), config, hourly, temperature, daily_log_load, truth })
}

/// Standard deviation of a unit-variance-innovation ARMA process from its
/// MA(∞) weights.
fn unconditional_sd(phi: &[f64], theta: &[f64]) -> f64 {
    let mut psi = vec![1.0];
    let mut total = 1.0;
    for j in 1..5000 {
        let mut v = if j <= theta.len() { theta[j - 1] } else { 0.0 };
        for (i, ph) in phi.iter().enumerate() {
            if j > i {
                v += ph * psi[j - i - 1];
            }
        }
        psi.push(v);
        total += v * v;
        if v.abs() < 1e-12 && j > phi.len() + theta.len() {
            break;
        }
    }
    total.sqrt()
}

fn ground_truth(spec: &SynthSpec, dates: &[NaiveDate]) -> GroundTruth {
    let final_year = spec.final_year();
    let shocks: BTreeMap<u32, f64> = spec.shock.iter().map(|s| (s.week, s.log_impact)).collect();
    let r = spec.residential_share;
    let lockdown = |d: NaiveDate| match (spec.lockdown_start, spec.lockdown_end) {
        (Some(s), Some(e)) => s <= d && d <= e,
        _ => false,
    };
    let daily: Vec<TruthDay> = dates
        .iter()
        .filter(|d| d.year() == final_year)
        .map(|&date| {
            let s = shocks.get(&week_of_year(date)).copied().unwrap_or(0.0);
            let load_pct = 100.0 * (s.exp() - 1.0);
            let lk = lockdown(date);
            let share = if lk { 1.4 * r } else { r };
            TruthDay { date, load_pct, gdp_pct: load_pct * 100.0 / (100.0 - share), lockdown: lk }
        })
        .collect();
    let mut weeks: BTreeMap<YearWeek, (f64, f64, usize)> = BTreeMap::new();
    for t in daily.iter().filter(|t| t.date.weekday().num_days_from_monday() < 5) {
        let e = weeks.entry(YearWeek::of(t.date)).or_insert((0.0, 0.0, 0));
        e.0 += t.load_pct;
        e.1 += t.gdp_pct;
        e.2 += 1;
    }
    let weekly = weeks
        .into_iter()
        .map(|(week, (l, g, n))| TruthWeek { week, load_pct: l / n as f64, gdp_pct: g / n as f64 })
        .collect();
    GroundTruth { daily, weekly }
}

impl SynthDataset {
    /// Hourly load in the ingest format (`timestamp,load_mw`).
    pub fn load_csv(&self) -> String {
        let mut out = String::with_capacity(self.hourly.len() * 32);
        out.push_str("timestamp,load_mw\n");
        for r in &self.hourly {
            let _ = writeln!(out, "{},{:?}", r.timestamp.format("%Y-%m-%dT%H:%M"), r.load.expect("generated"));
        }
        out
    }

    /// Daily temperature in the ingest format (`date,temp_c`).
    pub fn temperature_csv(&self) -> String {
        let mut out = String::from("date,temp_c\n");
        for (d, t) in &self.temperature {
            let _ = writeln!(out, "{d},{t:?}");
        }
        out
    }

    /// Ground truth as tab-separated text.
    pub fn truth_tsv(&self) -> String {
        let mut out = String::from("week\tload_pct\tgdp_pct\n");
        for w in &self.truth.weekly {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}", w.week, w.load_pct, w.gdp_pct);
        }
        out
    }

    /// Write `<CC>_load.csv`, `<CC>_temp.csv` and `<CC>_truth.tsv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let cc = &self.spec.country;
        std::fs::write(dir.join(format!("{cc}_load.csv")), self.load_csv())?;
        std::fs::write(dir.join(format!("{cc}_temp.csv")), self.temperature_csv())?;
        std::fs::write(dir.join(format!("{cc}_truth.tsv")), self.truth_tsv())?;
        Ok(())
    }
}

/// Write the shared `calendar.toml` for a set of datasets.
pub fn write_calendar(dir: &Path, datasets: &[SynthDataset]) -> Result<(), SynthError> {
    let file =
        CalendarFile { countries: datasets.iter().map(|d| (d.spec.country.clone(), d.config.clone())).collect() };
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("calendar.toml"), file.to_toml())?;
    Ok(())
}
