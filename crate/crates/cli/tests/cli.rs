use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_loadshock");

fn loadshock(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, countries: &str, seed: &str) {
    let out = loadshock(&["synth", "--out", p(dir), "--countries", countries, "--seed", seed]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Every file under `dir`, keyed by its path relative to `dir`.
fn read_tree(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read_to_string(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn synth_fixture_matches_golden_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "AA", "5");
    let res = loadshock(&["run", "--data", p(&data), "--out", p(&out), "--draws", "200", "--seed", "7"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let got = read_tree(&out);

    let golden = golden_dir();
    if std::env::var_os("LOADSHOCK_BLESS").is_some() {
        let _ = std::fs::remove_dir_all(&golden);
        for (name, body) in &got {
            let path = golden.join(name);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(path, body).unwrap();
        }
    }
    // the blessed outputs themselves must agree with the generator's truth
    let truth: BTreeMap<String, f64> = std::fs::read_to_string(data.join("AA_truth.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect();
    let est = weekly_intervals(&golden.join("AA/impact_weekly.tsv"));
    assert_eq!(est.len(), truth.len());
    let covered = est.iter().filter(|(w, lo, hi)| *lo <= truth[w] && truth[w] <= *hi).count();
    assert!(covered as f64 >= 0.85 * est.len() as f64, "golden intervals cover truth in {covered}/{} weeks", est.len());

    let want = read_tree(&golden);
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>(), "file set differs");
    for (name, body) in &want {
        assert!(
            got[name] == *body,
            "{name} differs from golden (rerun with LOADSHOCK_BLESS=1 after a deliberate change)"
        );
    }
}

#[test]
fn identical_manifests_give_identical_bytes_and_seed_moves_only_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "AA", "11");
    let run = |out: &Path, seed: &str| {
        let res = loadshock(&[
            "impact",
            "--data",
            p(&data),
            "--out",
            p(out),
            "--draws",
            "300",
            "--seed",
            seed,
            "--jobs",
            "1",
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        read_tree(out)
    };
    let a = run(&tmp.path().join("a"), "1");
    let b = run(&tmp.path().join("b"), "1");
    assert_eq!(a, b);

    let c = run(&tmp.path().join("c"), "2");
    let cols = |tree: &BTreeMap<String, String>| -> Vec<Vec<String>> {
        tree["AA/impact_weekly.tsv"]
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split('\t').map(str::to_string).collect())
            .collect()
    };
    let (ra, rc) = (cols(&a), cols(&c));
    assert_eq!(ra.len(), rc.len());
    let mut interval_changed = false;
    for (x, y) in ra.iter().zip(&rc) {
        assert_eq!(x[0], y[0]);
        assert_eq!(x[1], y[1], "point estimate moved with the seed");
        interval_changed |= x[2] != y[2] || x[3] != y[3];
    }
    assert!(interval_changed);
}

#[test]
fn unknown_country_is_an_invalid_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "AA", "1");
    let res = loadshock(&["fit", "--data", p(&data), "--out", p(&tmp.path().join("o")), "--countries", "AA,ZZ"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("ZZ"));
}

#[test]
fn bad_flag_values_are_invalid_manifests() {
    let res = loadshock(&["fit", "--mode", "sundays"]);
    assert_eq!(res.status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let res = loadshock(&["fit", "--data", p(tmp.path())]);
    assert_eq!(res.status.code(), Some(2), "missing calendar must be rejected");
}

#[test]
fn failing_country_does_not_stop_the_others() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "AA,BB", "3");
    std::fs::write(data.join("BB_load.csv"), "timestamp,load_mw\n").unwrap();
    let res = loadshock(&["fit", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(out.join("AA/model.tsv").exists());
    assert!(!out.join("AA/error.txt").exists());
    assert!(out.join("BB/error.txt").exists());
    let summary = std::fs::read_to_string(out.join("summary.tsv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("AA\tok")));
    assert!(summary.lines().any(|l| l.starts_with("BB\tfailed")));
    let prov = std::fs::read_to_string(out.join("provenance.json")).unwrap();
    assert!(prov.contains("\"BB\""));
}

#[test]
fn manifest_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "AA", "2");
    let manifest = tmp.path().join("run.toml");
    std::fs::write(
        &manifest,
        format!(
            "countries = [\"AA\"]\nestimator = \"ols_hac\"\ndraws = 100\ndata = \"{}\"\nout = \"{}\"\n",
            p(&data),
            p(&tmp.path().join("m"))
        ),
    )
    .unwrap();
    let res = loadshock(&["fit", "--manifest", p(&manifest)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let model = std::fs::read_to_string(tmp.path().join("m/AA/model.tsv")).unwrap();
    assert!(model.starts_with("# estimator\tols_hac"));

    let res = loadshock(&["fit", "--manifest", p(&manifest), "--estimator", "ml_arma"]);
    assert!(res.status.success());
    let model = std::fs::read_to_string(tmp.path().join("m/AA/model.tsv")).unwrap();
    assert!(model.starts_with("# estimator\tml_arma"));

    std::fs::write(&manifest, "colour = \"blue\"\n").unwrap();
    assert_eq!(loadshock(&["fit", "--manifest", p(&manifest)]).status.code(), Some(2));
}

/// Weekly 95% intervals as (week, lo, hi).
fn weekly_intervals(path: &Path) -> Vec<(String, f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn peak_only_mode_agrees_with_weekdays_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "AA", "21");
    let mut runs = Vec::new();
    for mode in ["weekdays", "peak_only"] {
        let out = tmp.path().join(mode);
        let res = loadshock(&["impact", "--data", p(&data), "--out", p(&out), "--mode", mode, "--draws", "500"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        runs.push(weekly_intervals(&out.join("AA/impact_weekly.tsv")));
    }
    let (a, b) = (&runs[0], &runs[1]);
    assert_eq!(a.len(), b.len());
    let overlap = a.iter().zip(b).filter(|(x, y)| x.1 <= y.2 && y.1 <= x.2).count();
    assert!(overlap as f64 >= 0.9 * a.len() as f64, "{overlap}/{} weeks overlap", a.len());
}

#[test]
fn missing_primary_temperatures_are_bridged_from_alternate_source() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "AA", "4");
    let temp = std::fs::read_to_string(data.join("AA_temp.csv")).unwrap();
    let mut lines = temp.lines();
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    // drop every 50th primary value; the alternate source reads 2 °C colder with a 0.9 slope
    let kept: Vec<&str> = rows.iter().enumerate().filter(|(i, _)| i % 50 != 7).map(|(_, r)| *r).collect();
    let dropped: Vec<&str> = rows.iter().enumerate().filter(|(i, _)| i % 50 == 7).map(|(_, r)| &r[..10]).collect();
    std::fs::write(data.join("AA_temp.csv"), format!("{header}\n{}\n", kept.join("\n"))).unwrap();
    let alt: Vec<String> = rows
        .iter()
        .map(|r| {
            let (d, t) = r.split_once(',').unwrap();
            format!("{d},{:.6}", 0.9 * t.parse::<f64>().unwrap() - 2.0)
        })
        .collect();
    std::fs::write(data.join("AA_temp_alt.csv"), format!("date,temp_c\n{}\n", alt.join("\n"))).unwrap();

    let out = tmp.path().join("out");
    let res = loadshock(&["ingest", "--data", p(&data), "--out", p(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let daily = std::fs::read_to_string(out.join("AA/daily.csv")).unwrap();
    let weekday_dropped: Vec<&&str> = dropped
        .iter()
        .filter(|d| {
            let date: chrono::NaiveDate = d.parse().unwrap();
            chrono::Datelike::weekday(&date).number_from_monday() <= 5
        })
        .collect();
    assert!(!weekday_dropped.is_empty());
    for d in weekday_dropped {
        assert!(daily.contains(*d), "{d} not imputed");
    }

    // an unrelated alternate source fails the bridge and the country
    let noise: Vec<String> =
        rows.iter().enumerate().map(|(i, r)| format!("{},{}", &r[..10], (i * 7919 % 31) as f64)).collect();
    std::fs::write(data.join("AA_temp_alt.csv"), format!("date,temp_c\n{}\n", noise.join("\n"))).unwrap();
    let res = loadshock(&["ingest", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(std::fs::read_to_string(out.join("AA/error.txt")).unwrap().contains("bridge"));
}
