use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::load::{column_index, detect_delimiter, is_missing_token};
use super::IngestError;
use crate::linalg;

/// An alternate temperature source is only trusted above this R².
pub const BRIDGE_R2_THRESHOLD: f64 = 0.85;
pub const BRIDGE_MIN_OVERLAP: usize = 30;

/// Affine map from an alternate temperature source onto the primary one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureBridge {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub overlap: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputedTemperature {
    pub date: NaiveDate,
    pub temp: f64,
    pub imputed: bool,
}

/// Parse a `date`,`temp_c` file. Missing values are skipped.
pub fn parse_temperature_file(bytes: &[u8]) -> Result<Vec<(NaiveDate, f64)>, IngestError> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| IngestError::Parse { line: 0, message: format!("not UTF-8: {e}") })?;
    if text.trim().is_empty() {
        return Err(IngestError::Empty("temperature file has no content".into()));
    }
    let mut reader =
        csv::ReaderBuilder::new().delimiter(detect_delimiter(text)).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::Parse { line: 1, message: e.to_string() })?.clone();
    let date_col = column_index(&headers, "date")?;
    let temp_col = column_index(&headers, "temp_c")?;
    let mut out: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| IngestError::Parse { line, message: e.to_string() })?;
        let raw_date = row.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| IngestError::Parse { line, message: format!("bad date `{raw_date}`: {e}") })?;
        let raw_temp = row.get(temp_col).unwrap_or("");
        if is_missing_token(raw_temp) {
            continue;
        }
        let temp: f64 = raw_temp
            .parse()
            .map_err(|_| IngestError::Parse { line, message: format!("bad temperature `{raw_temp}`") })?;
        if out.insert(date, temp).is_some() {
            return Err(IngestError::DuplicateTimestamp(date.to_string()));
        }
    }
    if out.is_empty() {
        return Err(IngestError::Empty("temperature file has no values".into()));
    }
    Ok(out.into_iter().collect())
}

/// Regress the primary source on the alternate over their common dates.
pub fn bridge_temperature(
    primary: &[(NaiveDate, f64)],
    alternate: &[(NaiveDate, f64)],
) -> Result<TemperatureBridge, IngestError> {
    let alt: BTreeMap<NaiveDate, f64> = alternate.iter().copied().collect();
    let pairs: Vec<(f64, f64)> = primary.iter().filter_map(|(d, p)| alt.get(d).map(|a| (*a, *p))).collect();
    if pairs.len() < BRIDGE_MIN_OVERLAP {
        return Err(IngestError::InsufficientOverlap { found: pairs.len(), required: BRIDGE_MIN_OVERLAP });
    }
    let n = pairs.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { pairs[i].0 });
    let y = DVector::from_iterator(n, pairs.iter().map(|p| p.1));
    let fit = linalg::ols(&x, &y).map_err(|e| IngestError::Invalid(format!("bridge regression: {e}")))?;
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if sst > 0.0 { (1.0 - fit.ssr / sst).clamp(0.0, 1.0) } else { 0.0 };
    Ok(TemperatureBridge {
        slope: fit.coef[1],
        intercept: fit.coef[0],
        r_squared,
        slope_se: fit.se[1],
        overlap: n,
        accepted: r_squared > BRIDGE_R2_THRESHOLD,
    })
}

/// Fill `gaps` from the alternate source through an accepted bridge.
pub fn impute_temperature(
    gaps: &[NaiveDate],
    alternate: &[(NaiveDate, f64)],
    bridge: &TemperatureBridge,
) -> Result<Vec<ImputedTemperature>, IngestError> {
    if !bridge.accepted {
        return Err(IngestError::BridgeRejected { r_squared: bridge.r_squared });
    }
    let alt: BTreeMap<NaiveDate, f64> = alternate.iter().copied().collect();
    gaps.iter()
        .map(|d| {
            let a = alt.get(d).ok_or(IngestError::MissingAlternate(*d))?;
            Ok(ImputedTemperature { date: *d, temp: bridge.intercept + bridge.slope * a, imputed: true })
        })
        .collect()
}
