use chrono::NaiveDate;

use super::{ImpactError, ImpactModel};

fn predict(model: &ImpactModel, dates: &[NaiveDate], with_shock: bool) -> Result<Vec<(NaiveDate, f64)>, ImpactError> {
    let smear = 0.5 * model.retransform_var;
    dates.iter().map(|d| model.deterministic(*d, with_shock).map(|v| (*d, (v + smear).exp()))).collect()
}

/// Level prediction `exp(deterministic part + s²/2)`.
pub fn predict_factual(model: &ImpactModel, dates: &[NaiveDate]) -> Result<Vec<(NaiveDate, f64)>, ImpactError> {
    predict(model, dates, true)
}

/// As [`predict_factual`] with every shock-year interaction set to zero.
pub fn predict_counterfactual(model: &ImpactModel, dates: &[NaiveDate]) -> Result<Vec<(NaiveDate, f64)>, ImpactError> {
    predict(model, dates, false)
}

/// Percentage impact `100 (Ŷ − Ŷ*) / Ŷ*`.
pub fn compute_impact(
    factual: &[(NaiveDate, f64)],
    counterfactual: &[(NaiveDate, f64)],
) -> Result<Vec<(NaiveDate, f64)>, ImpactError> {
    if factual.len() != counterfactual.len() {
        return Err(ImpactError::Misaligned);
    }
    factual
        .iter()
        .zip(counterfactual)
        .map(|(&(d, y), &(dc, yc))| {
            if d != dc {
                Err(ImpactError::Misaligned)
            } else if yc.is_nan() || yc <= 0.0 {
                Err(ImpactError::NonPositiveCounterfactual(d))
            } else {
                Ok((d, 100.0 * (y - yc) / yc))
            }
        })
        .collect()
}
