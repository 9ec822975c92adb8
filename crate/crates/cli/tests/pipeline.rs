use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use jobsignal_cli::artifacts::Envelope;
use jobsignal_core::counterfactual::{percent_change, CounterfactualResults, Matrix5};

const SMALL: &str = r#"
seed = 7
[simulate]
n_jobs = 500
pool_jobs = 200
[estimation]
pool_jobs = 300
n_bins = 10
[solver]
pool_jobs = 200
grid = 9
[counterfactual]
n_jobs = 200
"#;

fn jobsignal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jobsignal")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs the whole pipeline on the small config into a fresh directory.
fn full_run(dir: &Path) -> PathBuf {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("out");
    let o = jobsignal(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn shared_run() -> &'static Path {
    static RUN: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, out) = RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = full_run(dir.path());
        (dir, out)
    });
    out
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            for (k, v) in files(&p) {
                out.insert(Path::new(p.file_name().unwrap()).join(k), v);
            }
        } else {
            out.insert(PathBuf::from(p.file_name().unwrap()), fs::read(&p).unwrap());
        }
    }
    out
}

fn without_timing(manifest: &[u8]) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(manifest)
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_ms");
            v
        })
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let a = files(shared_run());
    let dir = tempfile::tempdir().unwrap();
    let b = files(&full_run(dir.path()));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, va) in &a {
        if k == Path::new("manifest.jsonl") {
            assert_eq!(without_timing(va), without_timing(&b[k]));
        } else {
            assert!(va == &b[k], "{} differs between runs", k.display());
        }
    }
}

#[test]
fn manifest_hashes_match_files() {
    let out = shared_run();
    let text = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 11);
    let last = lines.last().unwrap();
    assert_eq!(last["stage"], "report");
    for f in last["outputs"].as_array().unwrap() {
        let path = out.join(f["path"].as_str().unwrap());
        assert_eq!(jobsignal_cli::artifacts::sha256_file(&path).unwrap(), f["sha256"].as_str().unwrap());
    }
}

fn read_matrix(path: &Path) -> Matrix5 {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut m = [[0.0; 5]; 5];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<usize>().unwrap(), i + 1);
        for c in 0..5 {
            m[i][c] = rec[c + 1].parse().unwrap();
        }
    }
    m
}

fn cell(cuts: &[f64; 4], x: f64) -> usize {
    cuts.iter().filter(|&&q| x > q).count()
}

/// Expected hires over applicants per cell, straight from outcomes.csv.
fn rates_from_outcomes(out: &Path, scenario: &str, res: &CounterfactualResults) -> Matrix5 {
    let mut mass = [[0.0; 5]; 5];
    let mut count = [[0usize; 5]; 5];
    let mut r = csv::Reader::from_path(out.join("outcomes.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|x| x == name).unwrap();
    let (s, c, a, p) = (col("scenario"), col("cost"), col("ability"), col("choice_prob"));
    for rec in r.records() {
        let rec = rec.unwrap();
        if &rec[s] != scenario {
            continue;
        }
        let (ai, ci) = (
            cell(&res.quintiles.ability, rec[a].parse().unwrap()),
            cell(&res.quintiles.cost, rec[c].parse().unwrap()),
        );
        mass[ai][ci] += rec[p].parse::<f64>().unwrap();
        count[ai][ci] += 1;
    }
    let mut m = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            m[i][j] = if count[i][j] > 0 { mass[i][j] / count[i][j] as f64 } else { 0.0 };
        }
    }
    m
}

fn assert_close(a: &Matrix5, b: &Matrix5, what: &str) {
    for i in 0..5 {
        for j in 0..5 {
            let (x, y) = (a[i][j], b[i][j]);
            assert!(
                (x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-9 * (1.0 + y.abs()),
                "{what}[{i}][{j}]: {x} vs {y}"
            );
        }
    }
}

#[test]
fn report_matrices_match_outcomes() {
    let out = shared_run();
    let env: Envelope<CounterfactualResults> =
        serde_json::from_str(&fs::read_to_string(out.join("counterfactual.json")).unwrap()).unwrap();
    let res = env.data;
    let sq = rates_from_outcomes(out, "SQ", &res);
    let ns = rates_from_outcomes(out, "NS", &res);
    let fi = rates_from_outcomes(out, "FI", &res);
    assert_close(&read_matrix(&out.join("report/hiring_rate_sq.csv")), &sq, "SQ rate");
    assert_close(&read_matrix(&out.join("report/hiring_rate_ns.csv")), &ns, "NS rate");
    assert_close(&read_matrix(&out.join("report/hiring_pct_change_ns.csv")), &percent_change(&sq, &ns), "NS change");
    assert_close(&read_matrix(&out.join("report/hiring_pct_change_fi.csv")), &percent_change(&sq, &fi), "FI change");
}

#[test]
fn choice_probabilities_sum_to_one_per_job() {
    let out = shared_run();
    let env: Envelope<CounterfactualResults> =
        serde_json::from_str(&fs::read_to_string(out.join("counterfactual.json")).unwrap()).unwrap();
    assert!(env.data.max_probability_error < 1e-12);
}

#[test]
fn missing_artifact_names_file_and_producer() {
    let dir = tempfile::tempdir().unwrap();
    let o = jobsignal(&["--out", dir.path().to_str().unwrap(), "fit-reduced"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("considered.jsonl") && err.contains("`consider`"), "{err}");
}

fn first_record(out: &Path) -> serde_json::Value {
    let text = fs::read_to_string(out.join("applications.jsonl")).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

fn measure_with(line: &serde_json::Value) -> String {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("applications.jsonl"), format!("{line}\n")).unwrap();
    let o = jobsignal(&["--out", dir.path().to_str().unwrap(), "measure"]);
    assert!(!o.status.success());
    stderr(&o)
}

#[test]
fn schema_mismatch_names_field() {
    let rec = first_record(shared_run());
    let mut extra = rec.clone();
    extra["bid_usd"] = serde_json::json!(10.0);
    let err = measure_with(&extra);
    assert!(err.contains("bid_usd") && err.contains("line 1"), "{err}");

    let mut missing = rec.clone();
    missing.as_object_mut().unwrap().remove("signal");
    let err = measure_with(&missing);
    assert!(err.contains("criteria_custom"), "{err}");

    let mut gone = rec;
    gone.as_object_mut().unwrap().remove("bid");
    let err = measure_with(&gone);
    assert!(err.contains("bid"), "{err}");
}

#[test]
fn unknown_override_is_rejected() {
    let out = shared_run();
    let dir = tempfile::tempdir().unwrap();
    for f in ["considered.jsonl", "types.jsonl", "structural.params", "beliefs.json", "signal_side.json"] {
        fs::copy(out.join(f), dir.path().join(f)).unwrap();
    }
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "out = \".\"\n[overrides]\nbeta_hat = 0.0\n").unwrap();
    let o = jobsignal(&["--config", cfg.to_str().unwrap(), "counterfactual"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("beta_hat"), "{}", stderr(&o));
}
