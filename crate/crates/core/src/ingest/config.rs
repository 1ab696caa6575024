use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::calendar::HolidayCalendar;

/// Per-country settings.
///
/// In the calendar file each country is a `[countries.<CODE>]` table:
///
/// ```toml
/// [countries.BE]
/// residential_share = 30.0
/// lockdown_start = "2020-03-18"
/// lockdown_end = "2020-05-11"
/// arma_order = [3, 0]
/// capital_station = "Brussels"
///
/// [countries.BE.holidays]
/// generic = ["2019-04-22", "2019-05-01"]
/// gap_to_sunday = []
/// gap_to_saturday = ["2019-05-31"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryConfig {
    #[serde(default)]
    pub country: String,
    /// Residential share of national load, percent.
    pub residential_share: f64,
    #[serde(default)]
    pub lockdown_start: Option<NaiveDate>,
    #[serde(default)]
    pub lockdown_end: Option<NaiveDate>,
    #[serde(default)]
    pub arma_order: Option<(usize, usize)>,
    #[serde(default)]
    pub capital_station: String,
    #[serde(default)]
    pub holidays: HolidayCalendar,
}

impl CountryConfig {
    pub fn new(country: &str, residential_share: f64) -> Self {
        CountryConfig {
            country: country.to_string(),
            residential_share,
            lockdown_start: None,
            lockdown_end: None,
            arma_order: None,
            capital_station: String::new(),
            holidays: HolidayCalendar::default(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let r = self.residential_share;
        if !(r.is_finite() && (0.0..100.0 / 1.4).contains(&r)) {
            return Err(IngestError::Config(format!(
                "{}: residential_share {r} outside [0, {:.4})",
                self.country,
                100.0 / 1.4
            )));
        }
        match (self.lockdown_start, self.lockdown_end) {
            (Some(s), Some(e)) if s >= e => {
                Err(IngestError::Config(format!("{}: lockdown_start {s} must precede lockdown_end {e}", self.country)))
            }
            (Some(_), None) | (None, Some(_)) => {
                Err(IngestError::Config(format!("{}: lockdown window needs both endpoints", self.country)))
            }
            _ => Ok(()),
        }
    }

    /// Lockdown flag for `date`; both window endpoints are inclusive.
    pub fn in_lockdown(&self, date: NaiveDate) -> bool {
        match (self.lockdown_start, self.lockdown_end) {
            (Some(s), Some(e)) => s <= date && date <= e,
            _ => false,
        }
    }
}

/// The calendar/configuration file: one table per country.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalendarFile {
    #[serde(default)]
    pub countries: BTreeMap<String, CountryConfig>,
}

impl CalendarFile {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut file: CalendarFile = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        for (code, cfg) in file.countries.iter_mut() {
            if cfg.country.is_empty() {
                cfg.country = code.clone();
            }
            cfg.validate()?;
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calendar serializes")
    }

    pub fn get(&self, country: &str) -> Option<&CountryConfig> {
        self.countries.get(country)
    }
}
