//! `loadshock`: batch driver over countries for every pipeline stage.

mod country;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use loadshock::impact::Estimator;
use loadshock::pipeline::Mode;

use country::Stage;
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "loadshock", version, about = "Estimate shock impacts on electricity load and GDP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw files and write the daily modeled series and gap report.
    Ingest(RunArgs),
    /// Fit the prefilter and impact model.
    Fit(RunArgs),
    /// Fit, then simulate load impacts with Monte Carlo intervals.
    Impact(RunArgs),
    /// Load impacts rescaled to GDP and aggregated by week, month and quarter.
    Gdp(RunArgs),
    /// In-time placebo tests on pre-outbreak weeks and a pseudo shock year.
    Placebo(RunArgs),
    /// Full pipeline plus the cross-country diagnostics and GDP tables.
    Report(RunArgs),
    /// Same as `report`.
    Run(RunArgs),
    /// Write synthetic datasets with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML manifest with defaults for the flags below.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Comma-separated country codes; all configured countries when omitted.
    #[arg(long, value_delimiter = ',')]
    pub countries: Option<Vec<String>>,
    /// weekdays, all_days or peak_only.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// ml_arma or ols_hac.
    #[arg(long)]
    pub estimator: Option<Estimator>,
    /// Monte Carlo seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo draws [default: 5000].
    #[arg(long)]
    pub draws: Option<usize>,
    /// Shock date [default: 2020-03-03].
    #[arg(long)]
    pub shock_date: Option<NaiveDate>,
    /// Pseudo shock year of the second placebo test; 0 disables it
    /// [default: year before the shock].
    #[arg(long)]
    pub placebo_year: Option<i32>,
    /// Directory holding calendar.toml and the per-country files [default: data].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Countries processed at once; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
struct SynthArgs {
    /// Comma-separated country codes to generate.
    #[arg(long, value_delimiter = ',', default_value = "AA")]
    countries: Vec<String>,
    /// Base seed; country i uses seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// TOML synthetic spec applied to every country instead of the built-in example.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

const EXIT_PARTIAL: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, stage) = match cli.command {
        Command::Synth(a) => {
            return match synth(&a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_INVALID)
                }
            };
        }
        Command::Ingest(a) => (a, Stage::Ingest),
        Command::Fit(a) => (a, Stage::Fit),
        Command::Impact(a) => (a, Stage::Impact),
        Command::Gdp(a) => (a, Stage::Gdp),
        Command::Placebo(a) => (a, Stage::Placebo),
        Command::Report(a) | Command::Run(a) => (a, Stage::Full),
    };
    let manifest = match RunManifest::resolve(&args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: invalid manifest: {e:#}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    match output::run(&manifest, stage) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("{} of {} countries failed: {}", failed.len(), manifest.countries.len(), failed.join(", "));
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    use loadshock::synth::{generate, write_calendar, SynthSpec};
    let template = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(SynthSpec::from_toml(&text)?)
        }
        None => None,
    };
    let mut datasets = Vec::new();
    for (i, cc) in args.countries.iter().enumerate() {
        let seed = args.seed + i as u64;
        let spec = match &template {
            Some(t) => SynthSpec { country: cc.clone(), seed, ..t.clone() },
            None => SynthSpec::example(cc, seed),
        };
        let ds = generate(&spec).with_context(|| format!("generating {cc}"))?;
        ds.write_files(&args.out)?;
        std::fs::write(args.out.join(format!("{cc}_spec.toml")), spec.to_toml())?;
        datasets.push(ds);
    }
    write_calendar(&args.out, &datasets)?;
    println!("wrote {} synthetic dataset(s) to {}", datasets.len(), args.out.display());
    Ok(())
}
