//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion plus
//! informational lines, and exits nonzero if any criterion fails.
//!
//! Criterion 4 needs real data: set `LOADSHOCK_BELGIUM_DATA` to a directory
//! holding `calendar.toml` (with a `BE` table), `BE_load.csv` and `BE_temp.csv`.

use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use loadshock::calendar::YearWeek;
use loadshock::diagnostics::{ljung_box, placebo_pre_outbreak, placebo_shift_year};
use loadshock::exec::Execution;
use loadshock::gdp::{aggregate_period, rescale_to_gdp, Period};
use loadshock::impact::{
    arma, newey_west_cov, select_arma_order, FitOptions, ImpactSeries, InformationCriterion, McOptions,
};
use loadshock::ingest::{parse_load_file, parse_temperature_file, CalendarFile};
use loadshock::pipeline::{fit_country, prepare_series, run_country, CountryRun, Mode, PipelineOptions};
use loadshock::synth::{generate, ShockWeek, SynthDataset, SynthSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::erf::erfc;

enum Outcome {
    Pass,
    Fail,
    Skip,
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, name: &str, outcome: Outcome, detail: String) {
        let tag = match outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => {
                self.failed += 1;
                "FAIL"
            }
            Outcome::Skip => "SKIP",
        };
        println!("[{tag}] {id} {name}: {detail}");
    }

    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        self.line(id, name, if ok { Outcome::Pass } else { Outcome::Fail }, detail);
    }

    fn info(&self, name: &str, detail: String) {
        println!("[INFO] {name}: {detail}");
    }
}

/// Example dataset with uniform random log-impacts in [-0.30, 0] on every
/// week from the shock onwards.
fn shocked_spec(seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::example("AA", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xACCE);
    spec.shock = (11..=35).map(|w| ShockWeek { week: w, log_impact: -0.30 * rng.gen::<f64>() }).collect();
    spec
}

fn run(ds: &SynthDataset, mode: Mode, options: &PipelineOptions) -> CountryRun {
    let (series, gaps) = prepare_series(&ds.hourly, &ds.temperature, &ds.config, mode).expect("series");
    run_country(&series, gaps, &ds.config, mode, options).expect("pipeline")
}

fn criterion_1(r: &mut Report) {
    let t0 = Instant::now();
    let options = PipelineOptions { placebo_year: None, ..PipelineOptions::default() };
    let seeds: Vec<u64> = (0..50).map(|i| 7000 + i).collect();
    let per_dataset = Execution::default().map_slice(&seeds, |&seed| {
        let ds = generate(&shocked_spec(seed)).expect("synthetic dataset");
        let out = run(&ds, Mode::Weekdays, &options);
        let mut abs_err = 0.0;
        let (mut covered, mut n) = (0, 0);
        for w in &out.impact.weekly {
            let truth = ds.truth.week(w.week).expect("truth week").load_pct;
            abs_err += (w.impact - truth).abs();
            covered += usize::from(w.lo95 <= truth && truth <= w.hi95);
            n += 1;
        }
        (abs_err, covered, n)
    });
    let elapsed = t0.elapsed();
    let (err, covered, n) = per_dataset.iter().fold((0.0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mae = err / n as f64;
    let coverage = covered as f64 / n as f64;
    let ok = mae < 1.0 && (0.93..=0.97).contains(&coverage) && elapsed.as_secs() < 300;
    r.check(
        "1",
        "synthetic recovery",
        ok,
        format!(
            "MAE {mae:.3} pp (< 1), 95% coverage {:.1}% of {n} week-draws (93-97%), {:.1}s (< 300s), 50 datasets x {} draws",
            100.0 * coverage,
            elapsed.as_secs_f64(),
            options.mc.n_draws
        ),
    );
}

/// Two-sided exact binomial 95% acceptance band for the number of rejections.
fn binomial_band(n: u64, p: f64) -> (u64, u64) {
    let b = Binomial::new(p, n).expect("binomial");
    let lo = (0..=n).find(|&k| b.cdf(k) > 0.025).unwrap_or(0);
    let hi = (0..=n).find(|&k| b.cdf(k) >= 0.975).unwrap_or(n);
    (lo, hi)
}

fn criterion_2(r: &mut Report) {
    let options = PipelineOptions::default();
    let seeds: Vec<u64> = (0..100).map(|i| 9100 + i).collect();
    let counts = Execution::default().map_slice(&seeds, |&seed| {
        let mut spec = SynthSpec::example("AA", seed);
        spec.shock.clear();
        let ds = generate(&spec).expect("synthetic dataset");
        let (series, _) = prepare_series(&ds.hourly, &ds.temperature, &ds.config, Mode::Weekdays).expect("series");
        let fit = fit_country(&series, &ds.config, &options).expect("fit");
        let p1 = placebo_pre_outbreak(&fit.model, &options.alphas).expect("placebo 1");
        let p2 = placebo_shift_year(&series, &ds.config, &options, 2019).expect("placebo 2");
        let get = |p: &loadshock::diagnostics::PlaceboResult, a| p.failures_at(a).expect("alpha");
        (p1.weeks.len(), get(&p1, 0.05), get(&p1, 0.10), p2.weeks.len(), get(&p2, 0.05), get(&p2, 0.10))
    });
    let tests1: usize = counts.iter().map(|c| c.0).sum();
    let mut ok = true;
    let mut detail = Vec::new();
    for (alpha, idx) in [(0.05, 1), (0.10, 2)] {
        let fails: usize = counts.iter().map(|c| if idx == 1 { c.1 } else { c.2 }).sum();
        let (lo, hi) = binomial_band(tests1 as u64, alpha);
        let inside = (lo..=hi).contains(&(fails as u64));
        ok &= inside;
        detail.push(format!("placebo1 {:.0}%: {fails}/{tests1} in [{lo}, {hi}]", alpha * 100.0));
    }
    // placebo 2 failures are correlated within a dataset, so the comparison
    // uses the spread of per-dataset counts instead of a pooled binomial band
    for (alpha, expected, idx) in [(0.05, 2.6, 4), (0.10, 5.2, 5)] {
        let per: Vec<f64> = counts
            .iter()
            .map(|c| {
                let f = if idx == 4 { c.4 } else { c.5 } as f64;
                f * 52.0 / c.3 as f64
            })
            .collect();
        let m = per.len() as f64;
        let mean = per.iter().sum::<f64>() / m;
        let sd = (per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        let half = 1.984 * sd / m.sqrt();
        let inside = (mean - half..=mean + half).contains(&expected);
        ok &= inside;
        detail.push(format!(
            "placebo2 {:.0}%: mean {mean:.2} per 52 (95% CI {:.2}-{:.2}, expected {expected})",
            alpha * 100.0,
            mean - half,
            mean + half
        ));
    }
    r.check("2", "null placebo calibration", ok, format!("100 no-shock datasets; {}", detail.join("; ")));
}

fn criterion_3(r: &mut Report) {
    let a = rescale_to_gdp(-10.0, 30.0, false).expect("valid share");
    let b = rescale_to_gdp(-10.0, 30.0, true).expect("valid share");
    let round4 = |x: f64| (x * 1e4).round() / 1e4;
    let formulas = round4(a) == -14.2857 && round4(b) == -17.2414;

    let dates: Vec<NaiveDate> =
        (0..120).map(|i| NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + chrono::Days::new(i)).collect();
    let c = -7.25;
    let point = vec![c; dates.len()];
    let draws = vec![point.clone(); 50];
    let mut exact = true;
    for period in [Period::Week, Period::Month, Period::Quarter] {
        let agg = aggregate_period(&dates, &point, &draws, period, Execution::default()).expect("aggregate");
        exact &= agg.iter().all(|e| e.point == c && e.lo95 == c && e.hi95 == c);
    }
    r.check(
        "3",
        "GDP formula exactness",
        formulas && exact,
        format!("l=-10, r=30: {a:.4} (no lockdown), {b:.4} (lockdown); constant-path aggregation exact: {exact}"),
    );
}

fn criterion_4(r: &mut Report) {
    let Some(dir) = std::env::var_os("LOADSHOCK_BELGIUM_DATA") else {
        r.line("4", "real-data replication", Outcome::Skip, "LOADSHOCK_BELGIUM_DATA not set".into());
        return;
    };
    let dir = Path::new(&dir);
    let result = (|| -> Result<String, String> {
        let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
        let cal = CalendarFile::parse(&String::from_utf8_lossy(&read("calendar.toml")?)).map_err(|e| e.to_string())?;
        let config = cal.get("BE").ok_or("calendar.toml has no BE table")?;
        let hourly = parse_load_file(&read("BE_load.csv")?, "BE").map_err(|e| e.to_string())?;
        let temps = parse_temperature_file(&read("BE_temp.csv")?).map_err(|e| e.to_string())?;
        let (series, gaps) = prepare_series(&hourly, &temps, config, Mode::Weekdays).map_err(|e| e.to_string())?;
        let out = run_country(&series, gaps, config, Mode::Weekdays, &PipelineOptions::default())
            .map_err(|e| e.to_string())?;
        let reference = [(3, -8.53), (4, -16.53), (5, -9.18), (6, -4.52)];
        let mut ok = true;
        let mut parts = Vec::new();
        for (m, want) in reference {
            let got = out.gdp.month(2020, m).map(|e| e.point);
            let close = got.is_some_and(|g| (g - want).abs() <= 2.0);
            ok &= close;
            parts.push(format!("2020-{m:02} {} vs {want}", got.map_or("NA".into(), |g| format!("{g:.2}"))));
        }
        let lb = out.diagnostics.ljung_box.map(|l| l.p_value);
        ok &= lb.is_some_and(|p| p > 0.05);
        let tr2 = out.diagnostics.total_r2;
        ok &= tr2.is_some_and(|t| (t - 0.93).abs() <= 0.03);
        let detail = format!(
            "{}; Ljung-Box p {}; T-R2 {}",
            parts.join(", "),
            lb.map_or("NA".into(), |p| format!("{p:.3}")),
            tr2.map_or("NA".into(), |t| format!("{t:.3}"))
        );
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    match result {
        Ok(d) => r.check("4", "real-data replication", true, d),
        Err(d) => r.check("4", "real-data replication", false, d),
    }
}

/// Chi-square survival function for integer degrees of freedom from the
/// closed-form Poisson/normal series.
fn chi2_sf(x: f64, df: usize) -> f64 {
    if df.is_multiple_of(2) {
        let h = x / 2.0;
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..df / 2 {
            term *= h / k as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        let s = x.sqrt();
        let mut sum = 0.0;
        let mut term = s;
        for k in 1..=(df - 1) / 2 {
            if k > 1 {
                term *= x / (2 * k - 1) as f64;
            }
            sum += term;
        }
        let pdf = (-x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        erfc(s / std::f64::consts::SQRT_2) + 2.0 * pdf * sum
    }
}

fn ljung_box_oracle(e: &[f64], lag: usize, fitted: usize) -> (f64, f64) {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let c: Vec<f64> = e.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    let mut q = 0.0;
    for k in 1..=lag {
        let ck: f64 = (k..c.len()).map(|t| c[t] * c[t - k]).sum();
        let rho = ck / c0;
        q += rho * rho / (n - k as f64);
    }
    let q = n * (n + 2.0) * q;
    (q, chi2_sf(q, lag - fitted))
}

fn criterion_5(r: &mut Report) {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shocks: Vec<f64> = (0..400).map(|_| rng.sample(StandardNormal)).collect();
        let phi = 0.4 * (seed % 3) as f64 / 2.0;
        let e = arma::simulate(&[phi], &[], &shocks, 50);
        let fitted = (seed % 4) as usize;
        let lb = ljung_box(&e, 10, fitted).expect("ljung-box");
        let (q, p) = ljung_box_oracle(&e, 10, fitted);
        worst = worst.max(((lb.stat - q) / q).abs()).max(((lb.p_value - p) / p.max(1e-300)).abs());
    }
    let lb_ok = worst <= 1e-8;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (n, k) = (300, 4);
    let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
    let e = DVector::from_fn(n, |i, _| rng.sample::<f64, _>(StandardNormal) * (1.0 + x[(i, 1)].abs()));
    let nw = newey_west_cov(&x, &e, Some(0)).expect("newey-west");
    let xtx_inv = (x.transpose() * &x).try_inverse().expect("invertible");
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (e[i] * e[i]);
    }
    let white = &xtx_inv * meat * &xtx_inv;
    let rel = (&nw - &white).abs().max() / white.abs().max();
    let nw_ok = rel <= 1e-10;
    r.check(
        "5",
        "diagnostics correctness",
        lb_ok && nw_ok,
        format!("Ljung-Box worst relative error {worst:.2e} over 20 series (<= 1e-8); Newey-West L=0 vs White {rel:.2e} (<= 1e-10)"),
    );
}

fn tables(run: &CountryRun) -> [String; 5] {
    [
        run.impact.daily_tsv(),
        run.impact.weekly_tsv(),
        run.gdp.monthly_tsv(),
        run.gdp.weekly_tsv(),
        run.diagnostics.to_tsv(),
    ]
}

fn criterion_6(r: &mut Report) {
    let fixtures: Vec<SynthDataset> =
        [101, 102, 103].iter().map(|&s| generate(&shocked_spec(s)).expect("dataset")).collect();
    let opts = |seed| PipelineOptions {
        mc: McOptions { n_draws: 1000, seed, ..McOptions::default() },
        ..PipelineOptions::default()
    };
    let (a, b, c) = (opts(42), opts(42), opts(43));
    let mut identical = true;
    let mut points_fixed = true;
    let mut intervals_moved = true;
    for ds in &fixtures {
        let ra = run(ds, Mode::Weekdays, &a);
        let rb = run(ds, Mode::Weekdays, &b);
        identical &= tables(&ra) == tables(&rb);
        let rc = run(ds, Mode::Weekdays, &c);
        let pts = |s: &ImpactSeries| s.weekly.iter().map(|w| w.impact).collect::<Vec<_>>();
        points_fixed &= pts(&ra.impact) == pts(&rc.impact);
        intervals_moved &=
            ra.impact.weekly.iter().zip(&rc.impact.weekly).any(|(x, y)| x.lo95 != y.lo95 || x.hi95 != y.hi95);
    }
    r.check(
        "6",
        "determinism",
        identical && points_fixed && intervals_moved,
        format!("3 fixtures: byte-identical reruns {identical}; new seed keeps point estimates {points_fixed}, moves intervals {intervals_moved}"),
    );
}

fn criterion_7(r: &mut Report) {
    let options = PipelineOptions { placebo_year: None, ..PipelineOptions::default() };
    let seeds: Vec<u64> = (0..5).map(|i| 300 + i).collect();
    let results = Execution::default().map_slice(&seeds, |&seed| {
        let ds = generate(&shocked_spec(seed)).expect("dataset");
        let runs: Vec<CountryRun> = Mode::ALL.iter().map(|m| run(&ds, *m, &options)).collect();
        let shock_weeks: Vec<YearWeek> = ds.truth.weekly.iter().filter(|w| w.load_pct != 0.0).map(|w| w.week).collect();
        let mut overlap = 0;
        for w in &shock_weeks {
            let iv: Vec<(f64, f64)> = runs
                .iter()
                .map(|r| r.impact.weekly_for(*w).map_or((f64::NAN, f64::NAN), |e| (e.lo95, e.hi95)))
                .collect();
            let all = iv.iter().all(|a| iv.iter().all(|b| a.0 <= b.1 && b.0 <= a.1));
            overlap += usize::from(all);
        }
        (overlap, shock_weeks.len())
    });
    let (overlap, total) = results.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let share = overlap as f64 / total as f64;
    r.check(
        "7",
        "robustness modes",
        share >= 0.90,
        format!(
            "weekdays/all_days/peak_only intervals mutually overlap in {overlap}/{total} shock weeks ({:.1}%, >= 90%)",
            100.0 * share
        ),
    );
}

fn ar3_order_recovery(r: &Report) {
    let reps = 20u64;
    let hits = Execution::default().map(reps as usize, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
        let shocks: Vec<f64> = (0..1300).map(|_| rng.sample(StandardNormal)).collect();
        let u = arma::simulate(&[0.5, -0.2, 0.1], &[], &shocks, 100);
        select_arma_order(&u, 5, 2, InformationCriterion::Aic, &FitOptions::default()).map(|s| s.order)
    });
    let exact = hits.iter().filter(|h| matches!(h, Ok((3, 0)))).count();
    r.info(
        "AR(3) order recovery (not a criterion)",
        format!("AIC selects (3,0) in {exact}/{reps} replications of phi = (0.5, -0.2, 0.1), n = 1200"),
    );
}

fn main() {
    // `cargo test -- --list` and filters from other targets should not run the suite
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let t0 = Instant::now();
    let mut r = Report { failed: 0 };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    ar3_order_recovery(&r);
    println!("acceptance suite finished in {:.1}s: {} criterion failure(s)", t0.elapsed().as_secs_f64(), r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
