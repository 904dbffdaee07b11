//! End-to-end runs of the `dpts` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dpts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpts")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_str(&stdout(o)).unwrap()
}

fn write_line(dir: &Path, n: usize, beta: f64) -> String {
    let path = dir.join("line.csv");
    let mut s = String::from("x,y,label\n");
    for i in 0..n {
        let x = i as f64 / 4.0;
        s.push_str(&format!("{x},{},p{i}\n", 1.0 + beta * x));
    }
    std::fs::write(&path, s).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn fit_recovers_a_noiseless_line() {
    let dir = TempDir::new().unwrap();
    let input = write_line(dir.path(), 40, 1.5);
    let o = dpts(&["fit", "--input", &input, "--variant", "ts", "--epsilon", "1000", "--range", "10", "--theta", "1e-6"]);
    let v = json(&o);
    assert!((v["beta"].as_f64().unwrap() - 1.5).abs() < 1e-3);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["meta"]["n"], 40);
    assert_eq!(v["meta"]["epsilon"], 1000.0);
    for variant in ["ols", "theil-sen", "theil-sen-half"] {
        let v = json(&dpts(&["fit", "--input", &input, "--variant", variant]));
        assert!((v["beta"].as_f64().unwrap() - 1.5).abs() < 1e-12, "{variant}");
    }
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let input = write_line(dir.path(), 10, 1.0);
    let o = dpts(&["fit", "--input", &input, "--variant", "ols", "--y-col", "missing"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("missing"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n2,oops\n3,4\n").unwrap();
    let o = dpts(&["fit", "--input", bad.to_str().unwrap(), "--variant", "ols"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "x,y\n1,2\n2,3,4\n").unwrap();
    let o = dpts(&["fit", "--input", ragged.to_str().unwrap(), "--variant", "ols"]);
    assert_eq!(o.status.code(), Some(3));

    let one = dir.path().join("one.csv");
    std::fs::write(&one, "x,y\n1,2\n").unwrap();
    let o = dpts(&["fit", "--input", one.to_str().unwrap(), "--variant", "theil-sen"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ci_on_a_noiseless_line() {
    let dir = TempDir::new().unwrap();
    let input = write_line(dir.path(), 200, 2.0);
    for variant in ["ts", "half"] {
        let v = json(&dpts(&[
            "ci", "--input", &input, "--variant", variant, "--epsilon", "1e6", "--range", "10", "--theta", "1e-6", "--p", "0.1",
        ]));
        let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
        assert!(lo <= 2.0 && 2.0 <= hi && hi - lo < 1e-3, "{variant}: [{lo}, {hi}]");
        assert!(v["meta"]["b"].as_f64().unwrap() > 0.0);
        assert!(v["meta"]["eps_call"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn infeasible_ci_exits_4_and_names_the_precondition() {
    let dir = TempDir::new().unwrap();
    let input = write_line(dir.path(), 10, 2.0);
    let o = dpts(&["ci", "--input", &input, "--variant", "half", "--epsilon", "0.1", "--range", "10", "--theta", "0.01"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("1/2 - b - t"), "{}", stderr(&o));
}

#[test]
fn ci_lower_never_exceeds_upper() {
    let dir = TempDir::new().unwrap();
    let input = write_line(dir.path(), 60, -1.0);
    for seed in 0..15 {
        let v = json(&dpts(&[
            "ci", "--input", &input, "--variant", "ts", "--epsilon", "0.5", "--range", "10", "--theta", "0.05",
            "--p", "0.3", "--seed", &seed.to_string(),
        ]));
        assert!(v["lower"].as_f64().unwrap() <= v["upper"].as_f64().unwrap());
    }
}

#[test]
fn auto_theta_warns() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("noisy.csv");
    let mut s = String::from("x,y\n");
    for i in 0..50 {
        let x = i as f64 / 49.0;
        s.push_str(&format!("{x},{}\n", 2.0 * x + if i % 2 == 0 { 0.3 } else { -0.3 }));
    }
    std::fs::write(&path, s).unwrap();
    let o = dpts(&["fit", "--input", path.to_str().unwrap(), "--epsilon", "1", "--range", "10", "--theta", "auto"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("NOT covered by the differential privacy guarantee"));
    let o = dpts(&[
        "fit", "--input", path.to_str().unwrap(), "--epsilon", "1", "--range", "10", "--theta", "auto",
        "--sigma-e", "0.3", "--sigma-x", "0.29",
    ]);
    assert!(o.status.success());
    assert!(!stderr(&o).contains("WARNING"));
}

#[test]
fn bounds_table() {
    let o = dpts(&[
        "bounds", "--sigma-e", "1", "--sigma-x", "0.3", "--n", "50", "--p", "0.1", "--epsilon", "2", "--range", "10",
        "--theta", "0.01", "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let get = |name: &str, col: usize| -> String {
        rows.iter().find(|r| &r[1] == name).unwrap()[col].to_string()
    };
    let ratio = |name: &str| get(name, 3).parse::<f64>().unwrap();
    assert!((ratio("theil-sen") - (std::f64::consts::PI / 3.0).sqrt()).abs() < 1e-12);
    assert!((ratio("theil-sen-half") / ratio("theil-sen") - 2f64.sqrt()).abs() < 1e-12);
    // n = 50 < 16 ln(160): flagged, value still printed
    assert!(get("dp-theil-sen-half", 7).contains("n > 16 ln(16/p)=fail"));
    assert!(get("dp-theil-sen-half", 2).parse::<f64>().unwrap() > 0.0);
    // rows whose parameters were not supplied are skipped
    assert!(rows.iter().all(|r| &r[1] != "dp-suff-stats"));
}

#[test]
fn simulate_writes_reingestable_data() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("trial0.csv");
    let o = dpts(&[
        "simulate", "--n", "31", "--trials", "1", "--estimators", "theil-sen,ols", "--seed", "9", "--format", "json",
        "--dataset-out", data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mean_err = |label: &str| {
        rows.iter()
            .find(|r| r["label"] == label && r["metric"] == "mean_error")
            .unwrap()["value"]
            .as_f64()
            .unwrap()
    };
    for (label, variant) in [("theil-sen", "theil-sen"), ("ols", "ols")] {
        let v = json(&dpts(&["fit", "--input", data.to_str().unwrap(), "--variant", variant]));
        assert_eq!(v["beta"].as_f64().unwrap() - 2.0, mean_err(label), "{label}");
    }
}

#[test]
fn simulate_usage_errors() {
    let o = dpts(&["simulate", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty grid"));
    let o = dpts(&["simulate", "--estimators", "ts", "--range", "1", "--theta", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_from_config_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("config.json");
    let config = serde_json::json!({
        "n": 25, "alpha": 0.0, "beta": 1.0, "sigma_e": 0.5,
        "x_design": {"kind": "two-point", "lo": 0.0, "hi": 1.0},
        "trials": 20, "seed": 4,
        "estimators": [{"variant": "theil-sen", "epsilon": null, "range": null, "theta": null, "k": null}],
        "intervals": [],
        "report_ps": [0.1]
    });
    std::fs::write(&path, config.to_string()).unwrap();
    let o = dpts(&["simulate", "--config", path.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("two-point(0,1)"));
}
