//! Raw-file ingestion: hourly load, daily temperature, country calendars.
//!
//! The output of this module is the daily series of [`DailyObservation`]s
//! that the estimators consume, plus a [`GapReport`] of every date that was
//! dropped on the way.

mod config;
mod load;
mod series;
mod weather;

pub use config::{CalendarFile, CountryConfig};
pub use load::{aggregate_daily, parse_load_file, AggregationMode, DailyLoad, HourlyLoadRecord};
pub use series::{
    build_daily_series, read_daily_series, write_daily_series, DailyObservation, DayFilter, GapEntry, GapReason,
    GapReport,
};
pub use weather::{
    bridge_temperature, impute_temperature, parse_temperature_file, ImputedTemperature, TemperatureBridge,
    BRIDGE_MIN_OVERLAP, BRIDGE_R2_THRESHOLD,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("insufficient overlap: {found} common dates, need at least {required}")]
    InsufficientOverlap { found: usize, required: usize },
    #[error("temperature bridge rejected (R² = {r_squared:.3})")]
    BridgeRejected { r_squared: f64 },
    #[error("alternate source has no value for {0}")]
    MissingAlternate(chrono::NaiveDate),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
