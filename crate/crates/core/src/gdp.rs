//! From load impacts to GDP impacts: residential-share rescaling, period
//! aggregation with simulated intervals, and comparison with official
//! quarterly statistics.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use chrono::{Datelike, NaiveDate};
use serde::Serialize;
use thiserror::Error;

use crate::calendar::{is_weekend, YearWeek};
use crate::exec::Execution;
use crate::impact::ImpactSeries;
use crate::ingest::CountryConfig;
use crate::linalg;

/// Residential demand rises by this factor during lockdowns.
pub const LOCKDOWN_RESIDENTIAL_FACTOR: f64 = 1.4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdpError {
    #[error("residential share {0} outside [0, 100/1.4)")]
    ShareOutOfRange(f64),
    #[error("draws are not aligned with the dates")]
    Misaligned,
    #[error("missing pairs: {0}")]
    MissingPairs(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Impact on non-residential load, read as the GDP impact.
pub fn rescale_to_gdp(l: f64, r: f64, lockdown: bool) -> Result<f64, GdpError> {
    if !(0.0..100.0 / LOCKDOWN_RESIDENTIAL_FACTOR).contains(&r) {
        return Err(GdpError::ShareOutOfRange(r));
    }
    let denom = if lockdown { 100.0 - LOCKDOWN_RESIDENTIAL_FACTOR * r } else { 100.0 - r };
    Ok(l * 100.0 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Period {
    Week,
    Month,
    Quarter,
}

/// Calendar period label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PeriodKey {
    pub year: i32,
    /// Week, month or quarter number, depending on the period.
    pub index: u32,
    #[serde(skip)]
    pub period: PeriodKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum PeriodKind {
    #[default]
    Week,
    Month,
    Quarter,
}

impl PeriodKey {
    pub fn of(date: NaiveDate, period: Period) -> Self {
        match period {
            Period::Week => {
                let w = YearWeek::of(date);
                PeriodKey { year: w.year, index: w.week, period: PeriodKind::Week }
            }
            Period::Month => PeriodKey { year: date.year(), index: date.month(), period: PeriodKind::Month },
            Period::Quarter => {
                PeriodKey { year: date.year(), index: (date.month() - 1) / 3 + 1, period: PeriodKind::Quarter }
            }
        }
    }

    pub fn quarter(year: i32, q: u32) -> Self {
        PeriodKey { year, index: q, period: PeriodKind::Quarter }
    }
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.period {
            PeriodKind::Week => write!(f, "{}-W{:02}", self.year, self.index),
            PeriodKind::Month => write!(f, "{}-{:02}", self.year, self.index),
            PeriodKind::Quarter => write!(f, "{}-Q{}", self.year, self.index),
        }
    }
}

impl std::str::FromStr for PeriodKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("bad period `{s}`");
        let (y, rest) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        if let Some(q) = rest.strip_prefix('Q') {
            let q: u32 = q.parse().map_err(|_| bad())?;
            if !(1..=4).contains(&q) {
                return Err(bad());
            }
            Ok(PeriodKey::quarter(year, q))
        } else if let Some(w) = rest.strip_prefix('W') {
            Ok(PeriodKey { year, index: w.parse().map_err(|_| bad())?, period: PeriodKind::Week })
        } else {
            Ok(PeriodKey { year, index: rest.parse().map_err(|_| bad())?, period: PeriodKind::Month })
        }
    }
}

/// Significance from percentile intervals: 3 when the 99% interval excludes
/// zero, 2 for 95%, 1 for 90%, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Stars(pub u8);

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&"*".repeat(self.0 as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub period: PeriodKey,
    pub point: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub stars: Stars,
    /// Days averaged.
    pub days: usize,
}

fn excludes_zero(lo: f64, hi: f64) -> bool {
    lo > 0.0 || hi < 0.0
}

/// Average daily values within each period, for the plug-in path and every
/// draw, and summarise the draws by percentiles. Weekend dates are ignored.
pub fn aggregate_period(
    dates: &[NaiveDate],
    point: &[f64],
    draws: &[Vec<f64>],
    period: Period,
    exec: Execution,
) -> Result<Vec<PeriodEstimate>, GdpError> {
    if point.len() != dates.len() || draws.iter().any(|d| d.len() != dates.len()) {
        return Err(GdpError::Misaligned);
    }
    let mut groups: BTreeMap<PeriodKey, Vec<usize>> = BTreeMap::new();
    for (i, d) in dates.iter().enumerate() {
        if !is_weekend(*d) {
            groups.entry(PeriodKey::of(*d, period)).or_default().push(i);
        }
    }
    let groups: Vec<(PeriodKey, Vec<usize>)> = groups.into_iter().collect();
    Ok(exec.map_slice(&groups, |(key, idx)| {
        let m = idx.len() as f64;
        let avg = |path: &[f64]| idx.iter().map(|&i| path[i]).sum::<f64>() / m;
        let value = avg(point);
        let mut vals: Vec<f64> = draws.iter().map(|d| avg(d)).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| if vals.is_empty() { value } else { linalg::quantile_sorted(&vals, p) };
        let stars = [(0.005, 0.995, 3), (0.025, 0.975, 2), (0.05, 0.95, 1)]
            .iter()
            .find(|(lo, hi, _)| excludes_zero(q(*lo), q(*hi)))
            .map_or(0, |s| s.2);
        PeriodEstimate {
            period: *key,
            point: value,
            lo95: q(0.025).min(value),
            hi95: q(0.975).max(value),
            stars: Stars(stars),
            days: idx.len(),
        }
    }))
}

#[derive(Debug, Clone)]
pub struct GdpImpactSeries {
    pub country: String,
    pub daily: Vec<(NaiveDate, f64)>,
    pub weekly: Vec<PeriodEstimate>,
    pub monthly: Vec<PeriodEstimate>,
    pub quarterly: Vec<PeriodEstimate>,
}

impl GdpImpactSeries {
    fn table(rows: &[PeriodEstimate], label: &str) -> String {
        let mut out = format!("{label}\timpact\tlower\tupper\tstars\n");
        for r in rows {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}\t{}", r.period, r.point, r.lo95, r.hi95, r.stars);
        }
        out
    }

    pub fn monthly_tsv(&self) -> String {
        Self::table(&self.monthly, "month")
    }

    pub fn weekly_tsv(&self) -> String {
        Self::table(&self.weekly, "week")
    }

    pub fn quarterly_tsv(&self) -> String {
        Self::table(&self.quarterly, "quarter")
    }

    pub fn month(&self, year: i32, month: u32) -> Option<&PeriodEstimate> {
        self.monthly.iter().find(|m| m.period.year == year && m.period.index == month)
    }
}

/// Rescale every day of the plug-in path and of each draw, then aggregate.
pub fn gdp_impacts(
    series: &ImpactSeries,
    config: &CountryConfig,
    exec: Execution,
) -> Result<GdpImpactSeries, GdpError> {
    let r = config.residential_share;
    let dates = &series.draws.dates;
    if series.daily.len() != dates.len() || series.daily.iter().zip(dates).any(|(d, x)| d.date != *x) {
        return Err(GdpError::Misaligned);
    }
    let lockdown: Vec<bool> = dates.iter().map(|d| config.in_lockdown(*d)).collect();
    let rescale = |path: &[f64]| -> Result<Vec<f64>, GdpError> {
        path.iter().zip(&lockdown).map(|(l, lk)| rescale_to_gdp(*l, r, *lk)).collect()
    };
    let point = rescale(&series.daily.iter().map(|d| d.impact).collect::<Vec<_>>())?;
    let draws: Vec<Vec<f64>> =
        exec.map_slice(&series.draws.values, |v| rescale(v)).into_iter().collect::<Result<_, _>>()?;
    Ok(GdpImpactSeries {
        country: series.meta.country.clone(),
        daily: dates.iter().copied().zip(point.iter().copied()).collect(),
        weekly: aggregate_period(dates, &point, &draws, Period::Week, exec)?,
        monthly: aggregate_period(dates, &point, &draws, Period::Month, exec)?,
        quarterly: aggregate_period(dates, &point, &draws, Period::Quarter, exec)?,
    })
}

/// One row of official quarterly growth statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct OfficialGrowth {
    pub country: String,
    pub quarter: PeriodKey,
    pub growth_pct: f64,
    pub provisional: bool,
}

/// Parse `country,quarter,growth_pct,provisional` (comma or tab separated).
pub fn parse_official(text: &str) -> Result<Vec<OfficialGrowth>, GdpError> {
    let delim = if text.lines().next().unwrap_or("").contains('\t') { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new().delimiter(delim).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| GdpError::Parse { line: 1, message: e.to_string() })?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| GdpError::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let (c, q, g, p) = (col("country")?, col("quarter")?, col("growth_pct")?, col("provisional")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| GdpError::Parse { line, message: e.to_string() })?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let quarter: PeriodKey = field(q).parse().map_err(|m| GdpError::Parse { line, message: m })?;
        if quarter.period != PeriodKind::Quarter {
            return Err(GdpError::Parse { line, message: format!("`{}` is not a quarter", field(q)) });
        }
        let growth_pct =
            field(g).parse().map_err(|_| GdpError::Parse { line, message: format!("bad growth `{}`", field(g)) })?;
        let provisional = match field(p).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "p" => true,
            "false" | "0" | "no" | "" => false,
            other => return Err(GdpError::Parse { line, message: format!("bad provisional flag `{other}`") }),
        };
        out.push(OfficialGrowth { country: field(c).to_string(), quarter, growth_pct, provisional });
    }
    Ok(out)
}

/// Same-quarter growth one year before each of `rows`' quarters.
pub fn counterfactual_growth(all: &[OfficialGrowth], year: i32) -> Vec<OfficialGrowth> {
    all.iter()
        .filter(|o| o.quarter.year == year - 1)
        .map(|o| OfficialGrowth { quarter: PeriodKey::quarter(year, o.quarter.index), ..o.clone() })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub country: String,
    pub quarter: String,
    pub ours: f64,
    pub official: f64,
    pub counterfactual: f64,
    /// Official growth minus the counterfactual growth.
    pub adjusted_official: f64,
    pub provisional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Pearson correlation over non-provisional rows.
    pub correlation: Option<f64>,
    pub correlation_with_provisional: Option<f64>,
}

impl Comparison {
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("country\tquarter\tours\tofficial\tcounterfactual\tadjusted_official\tprovisional\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                r.country, r.quarter, r.ours, r.official, r.counterfactual, r.adjusted_official, r.provisional
            );
        }
        let f = |c: Option<f64>| c.map_or("NA".into(), |v| format!("{v:.6}"));
        let _ = writeln!(out, "# correlation: {}", f(self.correlation));
        let _ = writeln!(out, "# correlation_with_provisional: {}", f(self.correlation_with_provisional));
        out
    }
}

/// Pair our quarterly estimates with official growth net of the
/// counterfactual, keyed by (country, quarter).
pub fn compare_official(
    ours: &[(String, PeriodKey, f64)],
    official: &[OfficialGrowth],
    counterfactual: &[OfficialGrowth],
) -> Result<Comparison, GdpError> {
    let key = |c: &str, q: PeriodKey| (c.to_string(), q);
    let off: BTreeMap<_, _> = official.iter().map(|o| (key(&o.country, o.quarter), o)).collect();
    let cf: BTreeMap<_, _> = counterfactual.iter().map(|o| (key(&o.country, o.quarter), o)).collect();
    let mut missing = Vec::new();
    let mut rows = Vec::new();
    for (c, q, v) in ours {
        match (off.get(&key(c, *q)), cf.get(&key(c, *q))) {
            (Some(o), Some(f)) => rows.push(ComparisonRow {
                country: c.clone(),
                quarter: q.to_string(),
                ours: *v,
                official: o.growth_pct,
                counterfactual: f.growth_pct,
                adjusted_official: o.growth_pct - f.growth_pct,
                provisional: o.provisional,
            }),
            (o, f) => {
                if o.is_none() {
                    missing.push(format!("{c} {q} (official)"));
                }
                if f.is_none() {
                    missing.push(format!("{c} {q} (counterfactual)"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(GdpError::MissingPairs(missing.join(", ")));
    }
    let corr = |filter: &dyn Fn(&ComparisonRow) -> bool| {
        let sel: Vec<&ComparisonRow> = rows.iter().filter(|r| filter(r)).collect();
        let a: Vec<f64> = sel.iter().map(|r| r.ours).collect();
        let b: Vec<f64> = sel.iter().map(|r| r.adjusted_official).collect();
        linalg::pearson(&a, &b)
    };
    Ok(Comparison { correlation: corr(&|r| !r.provisional), correlation_with_provisional: corr(&|_| true), rows })
}
