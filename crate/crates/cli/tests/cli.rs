use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TAPER: &str = "taper:delta=0.4,eps=1,r=0,c=-2,d=2";
const SHIFT: &str = "shift:delta=0.8,c=-2,d=2";

fn pmtp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmtp")).args(args).output().expect("spawn pmtp")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

/// Simulated data file written by the CLI itself.
fn mock(dir: &Path, n: usize, seed: u64, extra: &[&str]) -> PathBuf {
    let (ns, ss) = (n.to_string(), seed.to_string());
    let out_dir = dir.to_str().unwrap();
    let mut args = vec![
        "simulate", "--scenario", "main_bz2_bw2", "--n", &ns, "--reps", "1", "--seed", &ss, "--out-dir", out_dir,
        "--write-data", "--estimator", "fixed",
    ];
    args.extend_from_slice(extra);
    ok(&pmtp(&args));
    dir.join(format!("main_bz2_bw2_n{n}_rep0000.csv"))
}

fn estimate_json(data: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["estimate", "--data", data.to_str().unwrap(), "--reduced-grid", "--format", "json"];
    args.extend_from_slice(extra);
    serde_json::from_str(&ok(&pmtp(&args))).unwrap()
}

#[test]
fn truth_reports_registered_scenarios() {
    for (name, want) in [("main_bz2_bw2", 0.2512), ("no_confounding", 0.2081), ("restricted_bz2", 0.2728)] {
        let v: Value = serde_json::from_str(&ok(&pmtp(&[
            "truth", "--scenario", name, "--n-mc", "1000000", "--format", "json",
        ])))
        .unwrap();
        assert_eq!(v["schema_version"], 1);
        let psi = v["psi"].as_f64().unwrap();
        assert!((psi - want).abs() < 0.002, "{name}: {psi}");
        assert!(v["mc_se"].as_f64().unwrap() < 5e-4);
    }
    let table = ok(&pmtp(&["truth", "--scenario", "no_confounding", "--n-mc", "100000"]));
    assert!(table.starts_with("no_confounding: 0.2"));
}

#[test]
fn unknown_scenario_is_an_input_error() {
    let out = pmtp(&["truth", "--scenario", "main_bz9_bw9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("main_bz9_bw9"));
    let dir = tempfile::tempdir().unwrap();
    let out = pmtp(&["simulate", "--scenario", "nope", "--n", "10", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_smoke_and_empty_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&pmtp(&[
        "simulate", "--scenario", "main_bz2_bw2", "--n", "750", "--reps", "5", "--seed", "9", "--out-dir", d,
        "--reduced-grid",
    ]));
    let rows = read_rows(&dir.path().join("results.csv"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        for idx in 5..9 {
            assert!(r[idx].parse::<f64>().unwrap().is_finite());
        }
        assert!(matches!(&r[9], "0" | "1"));
    }

    let empty = tempfile::tempdir().unwrap();
    ok(&pmtp(&[
        "simulate", "--scenario", "main_bz2_bw2", "--n", "750", "--reps", "0", "--out-dir",
        empty.path().to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(empty.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("scenario,estimator,n,rep,seed,estimate"));
}

#[test]
fn simulate_parametric_and_custom_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&pmtp(&[
        "simulate", "--beta", "0.5,0.2,1,0.5,-1,0.3,1,0,0.5,-1,-1.5,0", "--c", "-2", "--d", "2", "--mu", "-1",
        "--gamma", "-0.75", "--policy", TAPER, "--truth", "0.2512", "--n", "2000", "--reps", "3", "--out-dir", d,
        "--estimator", "parametric",
    ]));
    let rows = read_rows(&dir.path().join("results.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "custom");
    assert!(rows.iter().all(|r| (r[5].parse::<f64>().unwrap() - 0.2512).abs() < 0.05));
    // an incomplete custom model is rejected
    let out = pmtp(&["simulate", "--beta", "1,2", "--n", "10", "--out-dir", d]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn two_policy_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let data = mock(dir.path(), 1000, 4, &[]);
    let table = ok(&pmtp(&[
        "estimate", "--data", data.to_str().unwrap(), "--policy", TAPER, "--policy", SHIFT, "--reduced-grid",
        "--control-folds",
    ]));
    assert!(table.contains("Number of observations: 1000"));
    assert!(table.contains("-Proportion in the image of Policy_q^1:"));
    let header = table.lines().find(|l| l.contains("Estimate")).unwrap();
    let cols: Vec<&str> = header.split_whitespace().collect();
    assert_eq!(cols, ["Estimate", "Std.Error", "CI.Lower", "CI.Upper"]);
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("Policy_q^") && !l.contains(':')).collect();
    assert_eq!(rows.len(), 2);
}

#[test]
fn json_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let data = mock(dir.path(), 400, 5, &[]);
    let args = |fmt: &'static str| {
        vec![
            "estimate".to_string(),
            "--data".into(),
            data.to_str().unwrap().into(),
            "--policy".into(),
            TAPER.into(),
            "--reduced-grid".into(),
            "--seed".into(),
            "17".into(),
            "--emit-influence".into(),
            "--format".into(),
            fmt.into(),
        ]
    };
    let run = |fmt| {
        let a = args(fmt);
        pmtp(&a.iter().map(|s| s.as_str()).collect::<Vec<_>>())
    };
    let (first, second) = (ok(&run("json")), ok(&run("json")));
    assert_eq!(first, second);
    let v: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["schema_version"], 1);
    let r = &v["results"][0];
    assert_eq!(r["folds"].as_array().unwrap().len(), 3);
    assert!(r["folds"][0]["h"]["c_outer"].as_f64().is_some());
    assert_eq!(r["influence"].as_array().unwrap().len(), 400);
    let lo = r["ci_lower"].as_f64().unwrap();
    let hi = r["ci_upper"].as_f64().unwrap();
    let est = r["estimate"].as_f64().unwrap();
    assert!(lo < est && est < hi);

    let csv_out = ok(&run("csv"));
    let mut rdr = csv::Reader::from_reader(csv_out.as_bytes());
    let rec = rdr.records().next().unwrap().unwrap();
    assert_eq!(rec[2].parse::<f64>().unwrap(), est);

    // one thread or many, same report
    let a = args("json");
    let mut with_threads: Vec<&str> = a.iter().map(|s| s.as_str()).collect();
    with_threads.extend(["--threads", "1"]);
    assert_eq!(ok(&pmtp(&with_threads)), first);
}

#[test]
fn unit_weights_column_matches_no_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = mock(dir.path(), 300, 6, &[]);
    let plain = estimate_json(&data, &["--policy", TAPER]);
    let weighted = estimate_json(&data, &["--policy", TAPER, "--weights", "wt"]);
    assert_eq!(plain["results"][0]["estimate"], weighted["results"][0]["estimate"]);
    assert_eq!(plain["results"][0]["std_error"], weighted["results"][0]["std_error"]);
    assert_eq!(weighted["weighted"], false);
}

#[test]
fn two_phase_file_needs_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = mock(dir.path(), 600, 7, &["--missing-p0", "0.5"]);
    let text = std::fs::read_to_string(&data).unwrap();
    let missing = text.lines().filter(|l| l.contains(",NA,")).count();
    assert!(missing > 50);
    let with = estimate_json(&data, &["--policy", TAPER, "--weights", "wt"]);
    assert_eq!(with["n_obs"], 600);
    assert_eq!(with["n_missing_treatment"], missing);
    assert_eq!(with["weighted"], true);
    let est = with["results"][0]["estimate"].as_f64().unwrap();
    assert!(est > 0.1 && est < 0.4, "{est}");
    // without weights the rows with NA treatment are dropped as incomplete
    let without = estimate_json(&data, &["--policy", TAPER]);
    assert_eq!(without["n_obs"], 600 - missing);
    assert_eq!(without["n_dropped_incomplete"], missing);
}

#[test]
fn target_population_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = mock(dir.path(), 300, 8, &[]);
    // add an S column: members are rows with L > 0
    let mut rdr = csv::Reader::from_path(&data).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let li = headers.iter().position(|h| h == "L").unwrap();
    let out_path = dir.path().join("with_s.csv");
    let mut w = csv::Writer::from_path(&out_path).unwrap();
    let mut hdr: Vec<String> = headers.iter().map(String::from).collect();
    hdr.push("S".into());
    w.write_record(&hdr).unwrap();
    let mut members = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let inside = rec[li].parse::<f64>().unwrap() > 0.0;
        members += inside as usize;
        let mut row: Vec<String> = rec.iter().map(String::from).collect();
        row.push(if inside { "1" } else { "0" }.into());
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
    let v = estimate_json(&out_path, &["--policy", TAPER, "--ind-s", "S"]);
    assert_eq!(v["n_in_population"], members);
    assert_eq!(v["results"][0]["n_target"], members);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = mock(dir.path(), 100, 1, &[]);
    let d = data.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["estimate", "--data", d, "--policy", TAPER, "--nct", "Q"],
        vec!["estimate", "--data", d, "--policy", "taper:delta=0.4"],
        vec!["estimate", "--data", d, "--policy", TAPER, "--k-folds", "2"],
        vec!["estimate", "--data", "/nonexistent/file.csv", "--policy", TAPER],
        vec!["estimate", "--data", d],
        vec!["estimate", "--data", d, "--policy", TAPER, "--theta", "-1"],
    ];
    for args in cases {
        let out = pmtp(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
    }
    let out = pmtp(&["estimate", "--data", d, "--policy", TAPER, "--nct", "Q"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`Q`"));
}

#[test]
fn scenario_listing() {
    let v: Value = serde_json::from_str(&ok(&pmtp(&["scenarios", "--format", "json"]))).unwrap();
    let list = v["scenarios"].as_array().unwrap();
    assert_eq!(list.len(), 17);
    assert_eq!(list.iter().filter(|s| s["name"].as_str().unwrap().starts_with("main_")).count(), 9);
}
