use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::load::DailyLoad;
use super::{CountryConfig, IngestError};
use crate::calendar::{is_weekend, weekday_tag, HolidayType};

/// One modeled day for one country.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyObservation {
    pub date: NaiveDate,
    /// Natural log of the mean daily load.
    pub log_load: f64,
    /// Mean daily air temperature, °C.
    pub temp: f64,
    pub weekday: Weekday,
    pub holiday_type: HolidayType,
    pub lockdown: bool,
}

/// Which days enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayFilter {
    #[default]
    WeekdaysOnly,
    /// Weekends kept; used by the all-days robustness specification.
    AllDays,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapReason {
    MissingLoad,
    NonPositiveLoad,
    MissingTemperature,
}

impl GapReason {
    pub fn as_str(self) -> &'static str {
        match self {
            GapReason::MissingLoad => "missing_load",
            GapReason::NonPositiveLoad => "nonpositive_load",
            GapReason::MissingTemperature => "missing_temperature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapEntry {
    pub date: NaiveDate,
    pub reason: GapReason,
}

/// Dates dropped while building the daily series.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dates(&self, reason: GapReason) -> Vec<NaiveDate> {
        self.entries.iter().filter(|e| e.reason == reason).map(|e| e.date).collect()
    }

    /// `date,reason` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,reason\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{}", e.date, e.reason.as_str());
        }
        out
    }
}

/// Join daily load and temperature into the modeled series.
///
/// Weekends are dropped unless `filter` is [`DayFilter::AllDays`]. Days with
/// missing load or temperature are dropped and listed in the gap report.
pub fn build_daily_series(
    daily_load: &[DailyLoad],
    temps: &[(NaiveDate, f64)],
    config: &CountryConfig,
    filter: DayFilter,
) -> Result<(Vec<DailyObservation>, GapReport), IngestError> {
    if daily_load.is_empty() {
        return Err(IngestError::Empty("no daily load values".into()));
    }
    let temps: BTreeMap<NaiveDate, f64> = temps.iter().copied().collect();
    let mut gaps = GapReport::default();
    let mut out = Vec::with_capacity(daily_load.len());
    let mut sorted: Vec<DailyLoad> = daily_load.to_vec();
    sorted.sort_by_key(|d| d.date);
    for day in sorted {
        if filter == DayFilter::WeekdaysOnly && is_weekend(day.date) {
            continue;
        }
        let load = match day.mean_load {
            None => {
                gaps.entries.push(GapEntry { date: day.date, reason: GapReason::MissingLoad });
                continue;
            }
            Some(v) if v <= 0.0 || !v.is_finite() => {
                gaps.entries.push(GapEntry { date: day.date, reason: GapReason::NonPositiveLoad });
                continue;
            }
            Some(v) => v,
        };
        let Some(&temp) = temps.get(&day.date) else {
            gaps.entries.push(GapEntry { date: day.date, reason: GapReason::MissingTemperature });
            continue;
        };
        out.push(DailyObservation {
            date: day.date,
            log_load: load.ln(),
            temp,
            weekday: day.date.weekday(),
            holiday_type: config.holidays.classify(day.date),
            lockdown: config.in_lockdown(day.date),
        });
    }
    Ok((out, gaps))
}

const SERIES_HEADER: &str = "date,log_load,temp_c,weekday,holiday_type,lockdown";

/// Serialize a daily series as comma-separated text. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_daily_series(series: &[DailyObservation]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for o in series {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{},{},{}",
            o.date,
            o.log_load,
            o.temp,
            weekday_tag(o.weekday),
            o.holiday_type,
            o.lockdown
        );
    }
    out
}

fn parse_weekday(tag: &str) -> Option<Weekday> {
    Some(match tag {
        "mon" => Weekday::Mon,
        "tue" => Weekday::Tue,
        "wed" => Weekday::Wed,
        "thu" => Weekday::Thu,
        "fri" => Weekday::Fri,
        "sat" => Weekday::Sat,
        "sun" => Weekday::Sun,
        _ => return None,
    })
}

pub fn read_daily_series(text: &str) -> Result<Vec<DailyObservation>, IngestError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == SERIES_HEADER => {}
        _ => return Err(IngestError::Parse { line: 1, message: "unexpected daily series header".into() }),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| IngestError::Parse { line: line_no, message: m.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields"));
        }
        let date = NaiveDate::parse_from_str(f[0], "%Y-%m-%d").map_err(|_| err("bad date"))?;
        let log_load: f64 = f[1].parse().map_err(|_| err("bad log_load"))?;
        if !log_load.is_finite() {
            return Err(err("log_load must be finite"));
        }
        let temp: f64 = f[2].parse().map_err(|_| err("bad temp"))?;
        let weekday = parse_weekday(f[3]).ok_or_else(|| err("bad weekday"))?;
        if weekday != date.weekday() {
            return Err(err("weekday does not match date"));
        }
        let holiday_type: HolidayType = f[4].parse().map_err(|e: String| err(&e))?;
        let lockdown: bool = f[5].parse().map_err(|_| err("bad lockdown flag"))?;
        out.push(DailyObservation { date, log_load, temp, weekday, holiday_type, lockdown });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn be_config() -> CountryConfig {
        let mut cfg = CountryConfig::new("BE", 30.0);
        cfg.lockdown_start = Some(d(2020, 3, 18));
        cfg.lockdown_end = Some(d(2020, 5, 11));
        cfg
    }

    #[test]
    fn weekend_dropped_holiday_and_lockdown_flags() {
        let days = [d(2019, 12, 25), d(2019, 12, 28), d(2020, 4, 15)];
        let load: Vec<_> = days.iter().map(|&date| DailyLoad { date, mean_load: Some(100.0) }).collect();
        let temps: Vec<_> = days.iter().map(|&date| (date, 5.0)).collect();
        let (series, gaps) = build_daily_series(&load, &temps, &be_config(), DayFilter::WeekdaysOnly).unwrap();
        assert!(gaps.is_empty());
        assert_eq!(series.len(), 2, "Saturday 2019-12-28 must be dropped");
        assert_eq!(series[0].holiday_type, HolidayType::Christmas);
        assert!(!series[0].lockdown);
        assert!(series[1].lockdown);
        assert!((series[1].log_load - 100f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn missing_values_reported() {
        let load = vec![
            DailyLoad { date: d(2019, 4, 1), mean_load: None },
            DailyLoad { date: d(2019, 4, 2), mean_load: Some(10.0) },
            DailyLoad { date: d(2019, 4, 3), mean_load: Some(0.0) },
        ];
        let temps = vec![(d(2019, 4, 1), 1.0), (d(2019, 4, 3), 1.0)];
        let (series, gaps) = build_daily_series(&load, &temps, &be_config(), DayFilter::WeekdaysOnly).unwrap();
        assert!(series.is_empty());
        assert_eq!(gaps.dates(GapReason::MissingLoad), vec![d(2019, 4, 1)]);
        assert_eq!(gaps.dates(GapReason::MissingTemperature), vec![d(2019, 4, 2)]);
        assert_eq!(gaps.dates(GapReason::NonPositiveLoad), vec![d(2019, 4, 3)]);
        assert!(gaps.to_csv().contains("2019-04-02,missing_temperature"));
    }

    fn arb_series() -> impl Strategy<Value = Vec<DailyObservation>> {
        prop::collection::vec((0i64..3000, -5.0f64..15.0, -20.0f64..40.0, 0usize..7, any::<bool>()), 0..40).prop_map(
            |rows| {
                let base = d(2014, 1, 1);
                rows.into_iter()
                    .map(|(off, y, t, h, l)| {
                        let date = base + chrono::Duration::days(off);
                        let holiday_type = [
                            HolidayType::None,
                            HolidayType::Generic,
                            HolidayType::GapToSunday,
                            HolidayType::GapToSaturday,
                            HolidayType::Christmas,
                            HolidayType::NewYear,
                            HolidayType::Dec31,
                        ][h];
                        DailyObservation {
                            date,
                            log_load: y,
                            temp: t,
                            weekday: date.weekday(),
                            holiday_type,
                            lockdown: l,
                        }
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn daily_series_round_trip(series in arb_series()) {
            let text = write_daily_series(&series);
            prop_assert_eq!(read_daily_series(&text).unwrap(), series);
        }

        #[test]
        fn output_dates_are_input_weekdays(
            present in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)
        ) {
            let base = d(2019, 6, 1);
            let load: Vec<_> = present.iter().enumerate().map(|(i, (has_load, _))| DailyLoad {
                date: base + chrono::Duration::days(i as i64),
                mean_load: has_load.then_some(50.0),
            }).collect();
            let temps: Vec<_> = present.iter().enumerate().filter(|(_, (_, t))| *t)
                .map(|(i, _)| (base + chrono::Duration::days(i as i64), 10.0)).collect();
            let (series, _) = build_daily_series(&load, &temps, &be_config(), DayFilter::WeekdaysOnly).unwrap();
            for o in &series {
                prop_assert!(!is_weekend(o.date));
                prop_assert!(load.iter().any(|l| l.date == o.date));
            }
        }
    }
}
