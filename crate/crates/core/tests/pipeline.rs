use chrono::{Datelike, Weekday};
use loadshock::diagnostics::placebo_shift_year;
use loadshock::exec::Execution;
use loadshock::gdp::rescale_to_gdp;
use loadshock::impact::{monte_carlo_ci, ImpactError, McOptions};
use loadshock::pipeline::{fit_country, prepare_series, run_country, Mode, PipelineError, PipelineOptions};
use loadshock::synth::{generate, SynthSpec};

#[test]
fn noiseless_null_recovers_parameters_and_zero_impacts() {
    let spec = SynthSpec::noiseless_null("AA", 8);
    let ds = generate(&spec).unwrap();
    let (series, _) = prepare_series(&ds.hourly, &ds.temperature, &ds.config, Mode::Weekdays).unwrap();
    let options = PipelineOptions { placebo_year: None, ..PipelineOptions::default() };
    let fit = fit_country(&series, &ds.config, &options).unwrap();

    let sr = &fit.short_run;
    let e = &spec.eq1;
    assert!((sr.delta0 - e.delta0).abs() < 1e-6, "delta0 {} vs {}", sr.delta0, e.delta0);
    assert!((sr.delta1 - e.delta1).abs() < 1e-6, "delta1 {} vs {}", sr.delta1, e.delta1);
    assert!((sr.delta2 - e.delta2).abs() < 1e-6, "delta2 {} vs {}", sr.delta2, e.delta2);
    assert_eq!(sr.k, Some(e.k));
    let days = [Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri];
    for (day, want) in days.iter().zip(e.weekday) {
        let got = sr.weekday_effect(*day).unwrap();
        assert!((got - want).abs() < 1e-6, "{day}: {got} vs {want}");
    }
    for y in &fit.year_effects.years {
        assert!(y.alpha.abs() < 1e-6, "year {} level {}", y.year, y.alpha);
    }
    for (w, g) in &fit.model.gamma_star {
        assert!(g.abs() < 1e-6, "week {w}: {g}");
    }

    let dates: Vec<_> = fit.adjusted.iter().map(|o| o.0).filter(|d| d.year() == 2020).collect();
    let impact = monte_carlo_ci(&fit.model, &dates, &McOptions { n_draws: 200, ..McOptions::default() }).unwrap();
    for d in &impact.daily {
        assert!(d.impact.abs() < 1e-4 && d.lo95.abs() < 1e-4 && d.hi95.abs() < 1e-4, "{}: {d:?}", d.date);
    }
}

#[test]
fn second_placebo_never_reads_data_after_the_pseudo_year() {
    let ds = generate(&SynthSpec::example("AA", 12)).unwrap();
    let (series, _) = prepare_series(&ds.hourly, &ds.temperature, &ds.config, Mode::Weekdays).unwrap();
    let options = PipelineOptions::default();
    let clean = placebo_shift_year(&series, &ds.config, &options, 2019).unwrap();

    let mut poisoned = series.clone();
    for o in poisoned.iter_mut().filter(|o| o.date.year() > 2019) {
        o.log_load = f64::NAN;
        o.temp = f64::NAN;
    }
    let dirty = placebo_shift_year(&poisoned, &ds.config, &options, 2019).unwrap();
    assert_eq!(clean, dirty);
    assert_eq!(clean.year, 2019);
    assert_eq!(clean.weeks.len(), 52);
}

#[test]
fn ground_truth_gdp_is_rescaled_truth_load() {
    let ds = generate(&SynthSpec::example("AA", 2)).unwrap();
    let r = ds.spec.residential_share;
    for d in &ds.truth.daily {
        let want = rescale_to_gdp(d.load_pct, r, ds.config.in_lockdown(d.date)).unwrap();
        assert!((d.gdp_pct - want).abs() < 1e-12, "{}: {} vs {want}", d.date, d.gdp_pct);
    }
}

#[test]
fn full_run_is_identical_on_both_execution_paths() {
    let ds = generate(&SynthSpec::example("AA", 30)).unwrap();
    let (series, gaps) = prepare_series(&ds.hourly, &ds.temperature, &ds.config, Mode::Weekdays).unwrap();
    let run = |exec: Execution| {
        let options = PipelineOptions {
            mc: McOptions { n_draws: 300, seed: 5, exec },
            placebo_year: None,
            ..PipelineOptions::default()
        };
        run_country(&series, gaps.clone(), &ds.config, Mode::Weekdays, &options).unwrap()
    };
    let a = run(Execution::Sequential);
    let b = run(Execution::default());
    assert_eq!(a.impact.daily_tsv(), b.impact.daily_tsv());
    assert_eq!(a.impact.draws, b.impact.draws);
    assert_eq!(a.gdp.monthly_tsv(), b.gdp.monthly_tsv());
    assert_eq!(a.diagnostics.to_tsv(), b.diagnostics.to_tsv());
}

#[test]
fn selected_order_on_the_boundary_falls_back_to_the_next_ranked() {
    let mut spec = SynthSpec::example("AA", 9151);
    spec.config_order = None;
    let ds = generate(&spec).unwrap();
    let (series, _) = prepare_series(&ds.hourly, &ds.temperature, &ds.config, Mode::Weekdays).unwrap();
    let options = PipelineOptions { placebo_year: None, ..PipelineOptions::default() };
    let fit = fit_country(&series, &ds.config, &options).unwrap();
    let selected = fit.order_selection.as_ref().unwrap().order;
    assert_ne!(fit.model.order, selected);
    assert!(fit.warnings.iter().any(|w| w.contains("stationarity boundary")));

    let forced = PipelineOptions { order: Some(selected), ..options };
    assert!(matches!(
        fit_country(&series, &ds.config, &forced),
        Err(PipelineError::Impact(ImpactError::StationarityViolation))
    ));
}
