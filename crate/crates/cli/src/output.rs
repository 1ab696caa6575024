use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use loadshock::diagnostics::DiagnosticsReport;
use loadshock::exec::Execution;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::country::{process, CountryOutput, Stage};
use crate::manifest::{RunManifest, CALENDAR_FILE};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Ingest => "ingest",
        Stage::Fit => "fit",
        Stage::Placebo => "placebo",
        Stage::Impact => "impact",
        Stage::Gdp => "gdp",
        Stage::Full => "report",
    }
}

/// Run every country and write all outputs. Returns the countries that failed.
pub fn run(manifest: &RunManifest, stage: Stage) -> Result<Vec<String>> {
    let results = with_workers(manifest.jobs, |exec| {
        exec.map_slice(&manifest.countries, |cc| {
            let config = manifest.calendar.get(cc).expect("validated country");
            process(config, manifest, stage, exec)
        })
    })?;

    std::fs::create_dir_all(&manifest.out).with_context(|| format!("creating {}", manifest.out.display()))?;
    let mut written: BTreeMap<String, String> = BTreeMap::new();
    let mut inputs: BTreeMap<String, String> = BTreeMap::new();
    let cal = manifest.data.join(CALENDAR_FILE);
    inputs.insert(CALENDAR_FILE.into(), sha256_hex(&std::fs::read(&cal)?));

    let mut failed = Vec::new();
    let mut outputs: Vec<Option<CountryOutput>> = Vec::new();
    let mut statuses: Vec<(String, String)> = Vec::new();
    for (cc, res) in manifest.countries.iter().zip(results) {
        let dir = manifest.out.join(cc);
        std::fs::create_dir_all(&dir)?;
        let error_path = dir.join("error.txt");
        match res {
            Ok((out, files)) => {
                for f in files {
                    let bytes = std::fs::read(manifest.data.join(&f))?;
                    inputs.insert(f, sha256_hex(&bytes));
                }
                for (name, body) in &out.files {
                    write(&dir, name, body, &mut written, cc)?;
                }
                if error_path.exists() {
                    std::fs::remove_file(&error_path)?;
                }
                statuses.push((cc.clone(), "ok".into()));
                outputs.push(Some(out));
            }
            Err(e) => {
                let msg = format!("{e:#}");
                eprintln!("{cc}: {msg}");
                write(&dir, "error.txt", &format!("{msg}\n"), &mut written, cc)?;
                statuses.push((cc.clone(), msg));
                failed.push(cc.clone());
                outputs.push(None);
            }
        }
    }

    let out_dir = &manifest.out;
    write(out_dir, "summary.tsv", &summary_tsv(&statuses, &outputs), &mut written, "")?;
    if stage == Stage::Full {
        write(out_dir, "table2.tsv", &table2(&outputs), &mut written, "")?;
        let mut t3 = String::from("country\tmonth\tgdp_impact\tlower\tupper\tstars\n");
        for o in outputs.iter().flatten() {
            for line in &o.monthly {
                let _ = writeln!(t3, "{line}");
            }
        }
        write(out_dir, "table3.tsv", &t3, &mut written, "")?;
    }

    let provenance = json!({
        "tool": "loadshock",
        "version": env!("CARGO_PKG_VERSION"),
        "command": stage_name(stage),
        "manifest": {
            "countries": manifest.countries,
            "mode": manifest.mode.to_string(),
            "estimator": manifest.estimator.to_string(),
            "seed": manifest.seed,
            "draws": manifest.draws,
            "shock_date": manifest.shock_date.to_string(),
            "placebo_year": manifest.placebo_year,
        },
        "inputs": inputs,
        "outputs": written,
        "failed": failed,
    });
    let text = serde_json::to_string_pretty(&provenance)? + "\n";
    std::fs::write(out_dir.join("provenance.json"), text)?;
    Ok(failed)
}

fn write(dir: &Path, name: &str, body: &str, written: &mut BTreeMap<String, String>, cc: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    let key = if cc.is_empty() { name.to_string() } else { format!("{cc}/{name}") };
    written.insert(key, sha256_hex(body.as_bytes()));
    Ok(())
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.digits$}"))
}

fn summary_tsv(statuses: &[(String, String)], outputs: &[Option<CountryOutput>]) -> String {
    let mut s = String::from("country\tstatus\tAR\tMA\tk\tmean_load_impact\tnote\n");
    for ((cc, status), out) in statuses.iter().zip(outputs) {
        match out {
            Some(o) => {
                let (ar, ma) =
                    o.summary.order.map_or(("NA".into(), "NA".into()), |(p, q)| (p.to_string(), q.to_string()));
                let _ = writeln!(
                    s,
                    "{cc}\tok\t{ar}\t{ma}\t{}\t{}\t{}",
                    fmt_opt(o.summary.k, 1),
                    fmt_opt(o.summary.mean_load_impact, 4),
                    o.summary.warnings.join("; ")
                );
            }
            None => {
                let note = status.replace(['\t', '\n'], " ");
                let _ = writeln!(s, "{cc}\tfailed\tNA\tNA\tNA\tNA\t{note}");
            }
        }
    }
    s
}

fn table2(outputs: &[Option<CountryOutput>]) -> String {
    let mut s = format!("{}\n", DiagnosticsReport::HEADER);
    let mut expected = None;
    for o in outputs.iter().flatten() {
        if let Some((row, exp)) = &o.diagnostics_row {
            let _ = writeln!(s, "{row}");
            expected.get_or_insert_with(|| exp.clone());
        }
    }
    if let Some(e) = expected {
        let _ = writeln!(s, "{e}");
    }
    s
}

/// Run `f` with up to `jobs` concurrent countries (0 means every core).
#[cfg(feature = "parallel")]
fn with_workers<T: Send>(jobs: usize, f: impl FnOnce(Execution) -> T + Send) -> Result<T> {
    if jobs == 1 {
        return Ok(f(Execution::Sequential));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(|| f(Execution::Parallel)))
}

#[cfg(not(feature = "parallel"))]
fn with_workers<T: Send>(_jobs: usize, f: impl FnOnce(Execution) -> T + Send) -> Result<T> {
    Ok(f(Execution::Sequential))
}
