use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use loadshock::diagnostics::{placebo_pre_outbreak, placebo_shift_year, PlaceboResult};
use loadshock::exec::Execution;
use loadshock::gdp::gdp_impacts;
use loadshock::impact::{monte_carlo_ci, McOptions};
use loadshock::ingest::{
    bridge_temperature, impute_temperature, parse_load_file, parse_temperature_file, write_daily_series, CountryConfig,
    DailyObservation, GapReport,
};
use loadshock::pipeline::{fit_country, prepare_series, run_country, CountryFit, PipelineOptions};
use loadshock::prefilter::PrefilterReport;

use crate::manifest::RunManifest;

/// How far down the pipeline a subcommand goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Fit,
    Placebo,
    Impact,
    Gdp,
    Full,
}

/// Files produced for one country, as (name, contents) pairs.
#[derive(Debug, Default)]
pub struct CountryOutput {
    pub files: Vec<(String, String)>,
    pub summary: SummaryRow,
    pub diagnostics_row: Option<(String, String)>,
    pub monthly: Vec<String>,
}

#[derive(Debug, Default, Clone)]
pub struct SummaryRow {
    pub order: Option<(usize, usize)>,
    pub k: Option<f64>,
    pub mean_load_impact: Option<f64>,
    pub warnings: Vec<String>,
}

pub struct Inputs {
    pub series: Vec<DailyObservation>,
    pub gaps: GapReport,
    /// Input files read, relative to the data directory.
    pub files: Vec<String>,
}

pub fn load_name(cc: &str) -> String {
    format!("{cc}_load.csv")
}

pub fn temp_name(cc: &str) -> String {
    format!("{cc}_temp.csv")
}

pub fn temp_alt_name(cc: &str) -> String {
    format!("{cc}_temp_alt.csv")
}

/// Read the raw files of one country and build its modeled series. Days
/// without a primary temperature are filled from `<CC>_temp_alt.csv` through
/// an accepted bridge when that file exists.
pub fn read_inputs(data: &Path, config: &CountryConfig, manifest: &RunManifest) -> Result<Inputs> {
    let cc = &config.country;
    let read =
        |name: &str| std::fs::read(data.join(name)).with_context(|| format!("reading {}", data.join(name).display()));
    let hourly = parse_load_file(&read(&load_name(cc))?, cc).with_context(|| load_name(cc))?;
    let mut temps = parse_temperature_file(&read(&temp_name(cc))?).with_context(|| temp_name(cc))?;
    let mut files = vec![load_name(cc), temp_name(cc)];

    let alt_path = data.join(temp_alt_name(cc));
    if alt_path.exists() {
        files.push(temp_alt_name(cc));
        let alt = parse_temperature_file(&read(&temp_alt_name(cc))?).with_context(|| temp_alt_name(cc))?;
        let have: BTreeSet<NaiveDate> = temps.iter().map(|t| t.0).collect();
        let alt_dates: BTreeSet<NaiveDate> = alt.iter().map(|t| t.0).collect();
        let load_dates: BTreeSet<NaiveDate> = hourly.iter().map(|h| h.timestamp.date()).collect();
        let gaps: Vec<NaiveDate> =
            load_dates.iter().filter(|d| !have.contains(d) && alt_dates.contains(d)).copied().collect();
        if !gaps.is_empty() {
            let bridge = bridge_temperature(&temps, &alt).context("temperature bridge")?;
            let filled = impute_temperature(&gaps, &alt, &bridge).context("temperature bridge")?;
            temps.extend(filled.into_iter().map(|t| (t.date, t.temp)));
            temps.sort_by_key(|t| t.0);
        }
    }
    let (series, gaps) = prepare_series(&hourly, &temps, config, manifest.mode)?;
    if series.is_empty() {
        bail!("no usable days after ingestion");
    }
    Ok(Inputs { series, gaps, files })
}

pub fn pipeline_options(manifest: &RunManifest, exec: Execution) -> PipelineOptions {
    PipelineOptions {
        shock_date: manifest.shock_date,
        estimator: manifest.estimator,
        placebo_year: manifest.placebo_year,
        mc: McOptions { n_draws: manifest.draws, seed: manifest.seed, exec },
        ..PipelineOptions::default()
    }
}

fn model_tsv(fit: &CountryFit) -> String {
    let m = &fit.model;
    let mut out = String::new();
    let _ = writeln!(out, "# estimator\t{}", m.estimator);
    let _ = writeln!(out, "# order\t{}\t{}", m.order.0, m.order.1);
    let _ = writeln!(out, "# n_obs\t{}", m.n_obs);
    if let Some(ll) = m.loglik {
        let _ = writeln!(out, "# loglik\t{ll:.6}");
    }
    let _ = writeln!(out, "# sigma2\t{:.6e}", m.sigma2);
    let _ = writeln!(out, "# retransform_var\t{:.6e}", m.retransform_var);
    if let Some(bw) = m.hac_bandwidth {
        let _ = writeln!(out, "# hac_bandwidth\t{bw}");
    }
    for d in &m.dropped_terms {
        let _ = writeln!(out, "# dropped\t{d}");
    }
    out.push_str("parameter\testimate\tstd_error\n");
    let params = m.params();
    for (i, name) in m.param_names().iter().enumerate() {
        let _ = writeln!(out, "{name}\t{:.8}\t{:.8}", params[i], m.std_error(i));
    }
    out
}

fn order_tsv(fit: &CountryFit) -> Option<String> {
    let sel = fit.order_selection.as_ref()?;
    let mut out = String::from("p\tq\tcriterion\n");
    for ((p, q), v) in &sel.table {
        let _ = writeln!(out, "{p}\t{q}\t{}", v.map_or("NA".into(), |v| format!("{v:.4}")));
    }
    Some(out)
}

fn placebo_tsv(results: &[&PlaceboResult]) -> String {
    let mut out = String::from("year\tweek\testimate\tstd_error\tz\tp_value\treject_5%\treject_10%\n");
    for r in results {
        for w in &r.weeks {
            let rej = |i: usize| w.rejected.get(i).map_or("NA".into(), |b| u8::from(*b).to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{:.8}\t{:.8}\t{:.4}\t{:.4}\t{}\t{}",
                r.year,
                w.week,
                w.estimate,
                w.std_error,
                w.z,
                w.p_value,
                rej(0),
                rej(1)
            );
        }
    }
    out
}

fn fit_files(fit: &CountryFit, out: &mut CountryOutput) {
    let report = PrefilterReport { short_run: &fit.short_run, year_effects: &fit.year_effects };
    out.files.push(("prefilter.toml".into(), report.to_toml()));
    out.files.push(("model.tsv".into(), model_tsv(fit)));
    if let Some(t) = order_tsv(fit) {
        out.files.push(("order_selection.tsv".into(), t));
    }
    out.summary.order = Some(fit.model.order);
    out.summary.k = fit.short_run.k;
    out.summary.warnings = fit.warnings.clone();
}

/// Run one country up to `stage`. Failures are returned, never written here.
pub fn process(
    config: &CountryConfig,
    manifest: &RunManifest,
    stage: Stage,
    exec: Execution,
) -> Result<(CountryOutput, Vec<String>)> {
    let inputs = read_inputs(&manifest.data, config, manifest)?;
    let mut out = CountryOutput::default();
    out.files.push(("daily.csv".into(), write_daily_series(&inputs.series)));
    out.files.push(("gaps.csv".into(), inputs.gaps.to_csv()));
    if stage == Stage::Ingest {
        return Ok((out, inputs.files));
    }
    let options = pipeline_options(manifest, exec);

    if stage == Stage::Full {
        let run = run_country(&inputs.series, inputs.gaps, config, manifest.mode, &options)?;
        fit_files(&run.fit, &mut out);
        out.files.push(("impact_daily.tsv".into(), run.impact.daily_tsv()));
        out.files.push(("impact_weekly.tsv".into(), run.impact.weekly_tsv()));
        push_gdp(&mut out, &run.gdp);
        let placebos: Vec<&PlaceboResult> =
            run.diagnostics.placebo1.iter().chain(run.diagnostics.placebo2.iter()).collect();
        out.files.push(("placebo.tsv".into(), placebo_tsv(&placebos)));
        out.files.push(("diagnostics.tsv".into(), run.diagnostics.to_tsv()));
        out.diagnostics_row = Some((run.diagnostics.row(), run.diagnostics.expected_row()));
        out.summary.mean_load_impact = mean_post_shock(&run.impact.weekly, manifest.shock_date);
        return Ok((out, inputs.files));
    }

    let fit = fit_country(&inputs.series, config, &options)?;
    fit_files(&fit, &mut out);
    match stage {
        Stage::Placebo => {
            let p1 = placebo_pre_outbreak(&fit.model, &options.alphas)?;
            let p2 = match options.placebo_year {
                Some(y) => Some(placebo_shift_year(&inputs.series, config, &options, y)?),
                None => None,
            };
            let all: Vec<&PlaceboResult> = std::iter::once(&p1).chain(p2.iter()).collect();
            out.files.push(("placebo.tsv".into(), placebo_tsv(&all)));
        }
        Stage::Impact | Stage::Gdp => {
            let year = manifest.shock_date.year();
            let dates: Vec<NaiveDate> = fit.adjusted.iter().map(|o| o.0).filter(|d| d.year() == year).collect();
            let mut impact = monte_carlo_ci(&fit.model, &dates, &options.mc)?;
            impact.meta.country = config.country.clone();
            impact.meta.mode = manifest.mode.to_string();
            out.files.push(("impact_daily.tsv".into(), impact.daily_tsv()));
            out.files.push(("impact_weekly.tsv".into(), impact.weekly_tsv()));
            out.summary.mean_load_impact = mean_post_shock(&impact.weekly, manifest.shock_date);
            if stage == Stage::Gdp {
                let gdp = gdp_impacts(&impact, config, exec)?;
                push_gdp(&mut out, &gdp);
            }
        }
        _ => {}
    }
    Ok((out, inputs.files))
}

fn push_gdp(out: &mut CountryOutput, gdp: &loadshock::gdp::GdpImpactSeries) {
    out.files.push(("gdp_weekly.tsv".into(), gdp.weekly_tsv()));
    out.files.push(("gdp_monthly.tsv".into(), gdp.monthly_tsv()));
    out.files.push(("gdp_quarterly.tsv".into(), gdp.quarterly_tsv()));
    out.monthly = gdp
        .monthly
        .iter()
        .map(|m| format!("{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}", gdp.country, m.period, m.point, m.lo95, m.hi95, m.stars))
        .collect();
}

/// Mean weekly load impact over the weeks that start on or after the shock date.
fn mean_post_shock(weekly: &[loadshock::impact::WeeklyImpact], shock: NaiveDate) -> Option<f64> {
    let shock_week = shock.iso_week().week();
    let vals: Vec<f64> = weekly.iter().filter(|w| w.week.week >= shock_week).map(|w| w.impact).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
