//! End-to-end tests of the `icox` binary: exit codes, file formats,
//! determinism, and the prediction/benchmark contracts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn icox() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icox"))
}

fn run(args: &[&str]) -> Output {
    icox().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}: expected exit {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Simulate a small five-covariate study and return its directory.
fn small_sim(dir: &Path, seed: u64, n: usize) -> PathBuf {
    let out = dir.join(format!("sim{seed}_{n}"));
    let out_s = out.display().to_string();
    let args = [
        "simulate",
        "--model",
        "m1",
        "--n",
        &n.to_string(),
        "--d",
        "5",
        "--seed",
        &seed.to_string(),
        "--out-dir",
        &out_s,
    ];
    let res = run(&args.iter().map(|s| &**s).collect::<Vec<_>>());
    assert_code(&res, 0, "simulate");
    out
}

/// Quick training flags shared by the fit/path tests.
const QUICK: [&str; 8] = [
    "--epochs", "10", "--outer-iters", "4", "--hidden", "4", "--seed", "3",
];

fn parse_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).expect("readable csv");
    let headers = rdr
        .headers()
        .expect("header row")
        .iter()
        .map(str::to_string)
        .collect();
    let rows = rdr
        .records()
        .map(|r| r.expect("record").iter().map(str::to_string).collect())
        .collect();
    (headers, rows)
}

fn column(headers: &[String], rows: &[Vec<String>], name: &str) -> Vec<String> {
    let idx = headers
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name} present"));
    rows.iter().map(|r| r[idx].clone()).collect()
}

#[test]
fn simulate_same_seed_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let a = small_sim(tmp.path(), 7, 40);
    let b = small_sim(tmp.path(), 8, 40);
    let c = {
        // same flags as `a`, different directory
        let out = tmp.path().join("again");
        let res = run(&[
            "simulate", "--model", "m1", "--n", "40", "--d", "5", "--seed", "7", "--out-dir",
            path_str(&out),
        ]);
        assert_code(&res, 0, "simulate again");
        out
    };
    for file in ["data.csv", "truth.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(c.join(file)).unwrap();
        assert_eq!(x, y, "{file} must be identical for identical flags");
        let z = std::fs::read(b.join(file)).unwrap();
        assert_ne!(x, z, "{file} must differ for a different seed");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["format_version"], 1);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn unknown_model_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "simulate",
        "--model",
        "m3",
        "--n",
        "10",
        "--out-dir",
        path_str(&tmp.path().join("x")),
    ]);
    assert_code(&out, 2, "--model m3");
}

#[test]
fn corrupted_csv_names_the_row_and_column() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(
        &bad,
        "u,v,delta1,delta2,z1\n0.1,0.4,0,1,0.5\noops,0.3,0,1,0.2\n",
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--data",
        path_str(&bad),
        "--lambda",
        "1",
        "--out-dir",
        path_str(&tmp.path().join("x")),
    ]);
    assert_code(&out, 3, "non-numeric u");
    let err = stderr_of(&out);
    assert!(
        err.contains("row 2") && err.contains("'u'") && err.contains("oops"),
        "error must name the row and column: {err}"
    );
}

#[test]
fn unknown_columns_are_rejected_unless_allow_listed() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("extra.csv");
    std::fs::write(
        &file,
        "u,v,delta1,delta2,z1,note\n0.1,0.4,0,1,0.5,hello\n0.2,0.9,0,0,1.5,bye\n",
    )
    .unwrap();
    let refused = run(&[
        "fit",
        "--data",
        path_str(&file),
        "--lambda",
        "1",
        "--epochs",
        "2",
        "--outer-iters",
        "2",
        "--out-dir",
        path_str(&tmp.path().join("x")),
    ]);
    assert_code(&refused, 3, "unexpected column");
    assert!(stderr_of(&refused).contains("note"));

    let allowed = run(&[
        "fit",
        "--data",
        path_str(&file),
        "--lambda",
        "1",
        "--epochs",
        "2",
        "--outer-iters",
        "2",
        "--ignore-columns",
        "note",
        "--out-dir",
        path_str(&tmp.path().join("y")),
    ]);
    assert_code(&allowed, 0, "allow-listed column");
}

#[test]
fn fit_writes_a_model_that_reloads_with_a_feasible_hierarchy() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 11, 60);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "0.5",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    let out = run(&args);
    assert_code(&out, 0, "fit");
    // load_model re-validates every invariant including the hierarchy bound
    let model = icox::persist::load_model(&fit_dir.join("model.json")).expect("model reloads");
    assert!(model.check_hierarchy());
    assert!(model.selected_features().len() <= 5);
}

#[test]
fn path_marks_exactly_one_best_row_with_increasing_penalties() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 13, 80);
    let dir = tmp.path().join("path");
    let data = sim.join("data.csv");
    let mut args = vec![
        "path",
        "--data",
        path_str(&data),
        "--multiplier",
        "2.0",
        "--max-len",
        "12",
        "--out-dir",
        path_str(&dir),
    ];
    args.extend_from_slice(&QUICK);
    let out = run(&args);
    assert_code(&out, 0, "path");

    let (headers, rows) = parse_csv(&dir.join("path.csv"));
    assert!(rows.len() >= 2, "path should have several points");
    let best: Vec<String> = column(&headers, &rows, "is_best");
    assert_eq!(best.iter().filter(|b| *b == "1").count(), 1);
    let lambdas: Vec<f64> = column(&headers, &rows, "lambda")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(lambdas.windows(2).all(|w| w[0] < w[1]));
    let vibs: Vec<f64> = column(&headers, &rows, "val_ibs")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let best_idx = best.iter().position(|b| b == "1").unwrap();
    let min = vibs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(vibs[best_idx], min, "best row minimizes validation IBS");
    assert!(icox::persist::load_model(&dir.join("model.json")).is_ok());
}

/// The zero covariate row must reproduce the model's stored baseline
/// survival column exactly (bit-for-bit), because the fitted risk is
/// anchored at the origin.
#[test]
fn predict_zero_row_reproduces_stored_baseline_exactly() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 17, 60);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "0.3",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    assert_code(&run(&args), 0, "fit");

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit_dir.join("model.json")).unwrap())
            .unwrap();
    let times: Vec<f64> = doc["baseline_times"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let values: Vec<f64> = doc["baseline_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(!times.is_empty());

    let cov = tmp.path().join("zero.csv");
    std::fs::write(&cov, "z1,z2,z3,z4,z5\n0,0,0,0,0\n").unwrap();
    let grid: Vec<String> = times.iter().map(|t| format!("{t}")).collect();
    let pred_dir = tmp.path().join("pred");
    let out = run(&[
        "predict",
        "--model",
        path_str(&fit_dir.join("model.json")),
        "--data",
        path_str(&cov),
        "--times",
        &grid.join(","),
        "--out-dir",
        path_str(&pred_dir),
    ]);
    assert_code(&out, 0, "predict");

    let (headers, rows) = parse_csv(&pred_dir.join("predictions.csv"));
    let survival: Vec<f64> = column(&headers, &rows, "survival")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(survival.len(), values.len());
    for (s, v) in survival.iter().zip(&values) {
        let baseline_survival = (-v).exp();
        assert_eq!(
            s.to_bits(),
            baseline_survival.to_bits(),
            "zero-covariate survival must equal exp(-baseline) bitwise"
        );
    }
}

#[test]
fn risk_ordered_rows_give_pointwise_ordered_curves() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 19, 60);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "0.05",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    assert_code(&run(&args), 0, "fit");

    let model = icox::persist::load_model(&fit_dir.join("model.json")).unwrap();
    let za = [0.0, 0.0, 0.0, 0.0, 0.0];
    let zb = [-2.0, 2.0, 1.5, -1.5, 0.5];
    let ra = model.risk(&za).unwrap();
    let rb = model.risk(&zb).unwrap();
    assert_ne!(ra, rb, "pick covariates with distinct fitted risks");
    let (low, high) = if ra <= rb { (za, zb) } else { (zb, za) };

    let cov = tmp.path().join("two.csv");
    let fmt_row = |z: &[f64]| {
        z.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    std::fs::write(
        &cov,
        format!("z1,z2,z3,z4,z5\n{}\n{}\n", fmt_row(&low), fmt_row(&high)),
    )
    .unwrap();
    let pred_dir = tmp.path().join("pred");
    let out = run(&[
        "predict",
        "--model",
        path_str(&fit_dir.join("model.json")),
        "--data",
        path_str(&cov),
        "--t-points",
        "25",
        "--out-dir",
        path_str(&pred_dir),
    ]);
    assert_code(&out, 0, "predict");

    let (headers, rows) = parse_csv(&pred_dir.join("predictions.csv"));
    let ids = column(&headers, &rows, "id");
    let survival: Vec<f64> = column(&headers, &rows, "survival")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let s_low: Vec<f64> = survival
        .iter()
        .zip(&ids)
        .filter(|(_, id)| *id == "1")
        .map(|(s, _)| *s)
        .collect();
    let s_high: Vec<f64> = survival
        .iter()
        .zip(&ids)
        .filter(|(_, id)| *id == "2")
        .map(|(s, _)| *s)
        .collect();
    assert_eq!(s_low.len(), 25);
    assert!(
        s_low.iter().zip(&s_high).all(|(l, h)| l >= h),
        "lower risk must survive pointwise longer"
    );
    assert!(
        s_low.iter().zip(&s_high).any(|(l, h)| l > h),
        "curves must separate somewhere"
    );
    // each curve is nonincreasing in t
    assert!(s_low.windows(2).all(|w| w[1] <= w[0]));
    assert!(s_high.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn empty_time_grid_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 23, 40);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "1",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    assert_code(&run(&args), 0, "fit");
    let out = run(&[
        "predict",
        "--model",
        path_str(&fit_dir.join("model.json")),
        "--data",
        path_str(&sim.join("data.csv")),
        "--t-points",
        "0",
        "--out-dir",
        path_str(&tmp.path().join("x")),
    ]);
    assert_code(&out, 2, "empty grid");
}

#[test]
fn predict_dimension_mismatch_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 29, 40);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "1",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    assert_code(&run(&args), 0, "fit");
    let cov = tmp.path().join("narrow.csv");
    std::fs::write(&cov, "z1,z2\n0.5,1.0\n").unwrap();
    let out = run(&[
        "predict",
        "--model",
        path_str(&fit_dir.join("model.json")),
        "--data",
        path_str(&cov),
        "--t-points",
        "5",
        "--out-dir",
        path_str(&tmp.path().join("x")),
    ]);
    assert_code(&out, 3, "dimension mismatch");
}

#[test]
fn benchmark_single_replicate_mean_equals_the_value() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("bench");
    let out = run(&[
        "benchmark",
        "--model",
        "m1",
        "--n",
        "50",
        "--replicates",
        "1",
        "--seed",
        "5",
        "--d",
        "5",
        "--epochs",
        "8",
        "--outer-iters",
        "3",
        "--hidden",
        "4",
        "--multiplier",
        "2.5",
        "--max-len",
        "8",
        "--out-dir",
        path_str(&dir),
    ]);
    assert_code(&out, 0, "benchmark");
    let (headers, rows) = parse_csv(&dir.join("results.csv"));
    assert_eq!(rows.len(), 3, "one replicate + mean + sd rows");
    let by_label = |label: &str| {
        rows.iter()
            .find(|r| r[headers.iter().position(|h| h == "replicate").unwrap()] == label)
            .unwrap_or_else(|| panic!("{label} row"))
            .clone()
    };
    let rep = by_label("1");
    let mean = by_label("mean");
    let sd = by_label("sd");
    for metric in ["lambda", "n_active", "ibs", "l2", "r2", "tp", "tn"] {
        let idx = headers.iter().position(|h| h == metric).unwrap();
        let a: f64 = rep[idx].parse().unwrap();
        let b: f64 = mean[idx].parse().unwrap();
        assert_eq!(a, b, "mean of one replicate equals the value ({metric})");
        assert!(sd[idx].is_empty(), "sd is undefined for one replicate");
    }
}

#[test]
fn benchmark_results_reaggregate_to_the_reported_means() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("bench");
    let out = run(&[
        "benchmark",
        "--model",
        "m1",
        "--n",
        "50",
        "--replicates",
        "3",
        "--seed",
        "2",
        "--d",
        "5",
        "--epochs",
        "8",
        "--outer-iters",
        "3",
        "--hidden",
        "4",
        "--multiplier",
        "2.5",
        "--max-len",
        "8",
        "--out-dir",
        path_str(&dir),
    ]);
    assert_code(&out, 0, "benchmark");
    let (headers, rows) = parse_csv(&dir.join("results.csv"));
    let rep_col = headers.iter().position(|h| h == "replicate").unwrap();
    let reps: Vec<&Vec<String>> = rows
        .iter()
        .filter(|r| r[rep_col].parse::<usize>().is_ok())
        .collect();
    assert_eq!(reps.len(), 3);
    let mean_row = rows.iter().find(|r| r[rep_col] == "mean").unwrap();
    for metric in ["ibs", "l2", "r2", "tp", "tn"] {
        let idx = headers.iter().position(|h| h == metric).unwrap();
        let vals: Vec<f64> = reps.iter().map(|r| r[idx].parse().unwrap()).collect();
        let independent = vals.iter().sum::<f64>() / vals.len() as f64;
        let reported: f64 = mean_row[idx].parse().unwrap();
        assert!(
            (independent - reported).abs() <= 1e-12 * independent.abs().max(1.0),
            "{metric}: independent mean {independent} vs reported {reported}"
        );
    }
}

#[test]
fn rerun_replays_byte_identically_and_rejects_changed_inputs() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 31, 50);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "0.4",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    assert_code(&run(&args), 0, "fit");

    let replay = tmp.path().join("replay");
    let out = run(&[
        "rerun",
        "--manifest",
        path_str(&fit_dir.join("manifest.json")),
        "--out-dir",
        path_str(&replay),
    ]);
    assert_code(&out, 0, "rerun");
    assert!(String::from_utf8_lossy(&out.stdout).contains("byte-identical"));
    assert_eq!(
        std::fs::read(fit_dir.join("model.json")).unwrap(),
        std::fs::read(replay.join("model.json")).unwrap()
    );

    // corrupt the input: rerun must refuse with a data error
    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str("1,0.5,0.9,0,1,0,0,0,0,0\n");
    std::fs::write(&data, text).unwrap();
    let refused = run(&[
        "rerun",
        "--manifest",
        path_str(&fit_dir.join("manifest.json")),
        "--out-dir",
        path_str(&tmp.path().join("replay2")),
    ]);
    assert_code(&refused, 3, "changed input");
    assert!(stderr_of(&refused).contains("changed since the recorded run"));
}

#[test]
fn predict_honors_an_id_column_and_tolerates_structural_columns() {
    let tmp = TempDir::new().unwrap();
    let sim = small_sim(tmp.path(), 37, 40);
    let fit_dir = tmp.path().join("fit");
    let data = sim.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        path_str(&data),
        "--lambda",
        "1",
        "--out-dir",
        path_str(&fit_dir),
    ];
    args.extend_from_slice(&QUICK);
    assert_code(&run(&args), 0, "fit");

    let cov = tmp.path().join("labeled.csv");
    std::fs::write(
        &cov,
        "id,u,v,delta1,delta2,z1,z2,z3,z4,z5\nalice,0.1,0.2,0,1,0,0,0,0,0\nbob,0.3,0.4,0,0,1,1,1,1,1\n",
    )
    .unwrap();
    let pred_dir = tmp.path().join("pred");
    let out = run(&[
        "predict",
        "--model",
        path_str(&fit_dir.join("model.json")),
        "--data",
        path_str(&cov),
        "--t-points",
        "3",
        "--out-dir",
        path_str(&pred_dir),
    ]);
    assert_code(&out, 0, "predict with ids");
    let (headers, rows) = parse_csv(&pred_dir.join("predictions.csv"));
    let ids = column(&headers, &rows, "id");
    assert_eq!(ids.iter().filter(|i| *i == "alice").count(), 3);
    assert_eq!(ids.iter().filter(|i| *i == "bob").count(), 3);
}
