use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use loadshock::impact::Estimator;
use loadshock::ingest::CalendarFile;
use loadshock::pipeline::Mode;
use serde::Deserialize;

use crate::RunArgs;

/// Optional TOML file holding the same settings as the command-line flags.
/// Flags given explicitly take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub countries: Option<Vec<String>>,
    pub mode: Option<String>,
    pub estimator: Option<String>,
    pub seed: Option<u64>,
    pub draws: Option<usize>,
    pub shock_date: Option<NaiveDate>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub countries: Vec<String>,
    pub mode: Mode,
    pub estimator: Estimator,
    pub seed: u64,
    pub draws: usize,
    pub shock_date: NaiveDate,
    pub placebo_year: Option<i32>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    pub calendar: CalendarFile,
}

pub const CALENDAR_FILE: &str = "calendar.toml";

pub fn load_file(path: &Path) -> Result<ManifestFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

impl RunManifest {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.manifest {
            Some(p) => load_file(p)?,
            None => ManifestFile::default(),
        };
        let mode = match (&args.mode, &file.mode) {
            (Some(m), _) => *m,
            (None, Some(s)) => s.parse::<Mode>().map_err(anyhow::Error::msg)?,
            (None, None) => Mode::default(),
        };
        let estimator = match (&args.estimator, &file.estimator) {
            (Some(e), _) => *e,
            (None, Some(s)) => s.parse::<Estimator>().map_err(anyhow::Error::msg)?,
            (None, None) => Estimator::MlArma,
        };
        let data = args.data.clone().or(file.data).unwrap_or_else(|| PathBuf::from("data"));
        let out = args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out"));
        let draws = args.draws.or(file.draws).unwrap_or(5000);
        if draws == 0 {
            bail!("--draws must be positive");
        }
        let shock_date = args.shock_date.or(file.shock_date).unwrap_or(loadshock::prefilter::DEFAULT_SHOCK_DATE);

        let cal_path = data.join(CALENDAR_FILE);
        let text = std::fs::read_to_string(&cal_path).with_context(|| format!("reading {}", cal_path.display()))?;
        let calendar = CalendarFile::parse(&text).with_context(|| format!("parsing {}", cal_path.display()))?;

        let countries = match args.countries.clone().or(file.countries) {
            Some(list) => list,
            None => calendar.countries.keys().cloned().collect(),
        };
        if countries.is_empty() {
            bail!("no countries selected and none configured in {}", cal_path.display());
        }
        let unknown: Vec<&str> = countries.iter().filter(|c| calendar.get(c).is_none()).map(String::as_str).collect();
        if !unknown.is_empty() {
            bail!(
                "unknown countr{} {} (not in {})",
                if unknown.len() == 1 { "y" } else { "ies" },
                unknown.join(", "),
                cal_path.display()
            );
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = countries.iter().find(|c| !seen.insert(c.as_str())) {
            bail!("country {dup} listed twice");
        }

        Ok(RunManifest {
            countries,
            mode,
            estimator,
            seed: args.seed.or(file.seed).unwrap_or(42),
            draws,
            shock_date,
            placebo_year: match args.placebo_year {
                Some(0) => None,
                Some(y) => Some(y),
                None => Some(chrono::Datelike::year(&shock_date) - 1),
            },
            data,
            out,
            jobs: args.jobs,
            calendar,
        })
    }
}
