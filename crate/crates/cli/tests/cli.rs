use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Days, NaiveDate};

const COUNTIES: [&str; 3] = ["01001", "01003", "01005"];
const DAYS: usize = 30;

fn series_csv(values: impl Fn(usize, usize) -> u64) -> String {
    let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let mut s = String::from("countyFIPS,County Name,State");
    for d in 0..DAYS {
        let date = start.checked_add_days(Days::new(d as u64)).unwrap();
        s.push_str(&format!(",{}", date.format("%-m/%-d/%y")));
    }
    s.push('\n');
    for (c, id) in COUNTIES.iter().enumerate() {
        s.push_str(&format!("{id},County {c},AL"));
        for d in 0..DAYS {
            s.push_str(&format!(",{}", values(c, d)));
        }
        s.push('\n');
    }
    s
}

fn deaths(c: usize, d: usize) -> u64 {
    10 + (c as u64 + 2) * d as u64
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("deaths.csv"), series_csv(deaths)).unwrap();
        fs::write(dir.path().join("cases.csv"), series_csv(|c, d| 30 * deaths(c, d) + 7)).unwrap();
        fs::write(
            dir.path().join("adjacency.csv"),
            "countyFIPS,neighborFIPS\n01001,01003\n01003,01005\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("hospitals.csv"),
            "hospital_id,countyFIPS,employees\nh1,01001,120\nh2,01003,80\nh3,01005,300\n",
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], with_adjacency: bool) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_clep"));
        cmd.args(args)
            .arg("--deaths")
            .arg(self.path("deaths.csv"))
            .arg("--cases")
            .arg(self.path("cases.csv"));
        if with_adjacency {
            cmd.arg("--adjacency").arg(self.path("adjacency.csv"));
        }
        cmd.output().unwrap()
    }
}

fn data_lines(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# schema="), "{}", path.display());
    text.lines().skip(2).map(String::from).collect()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn forecast_writes_three_files_with_expected_rows() {
    let f = Fixture::new();
    let out_dir = f.path("fc");
    let out = f.run(&["forecast", "--out", out_dir.to_str().unwrap()], true);
    assert_ok(&out);
    // two ensemble members plus the ensemble itself
    assert_eq!(data_lines(&out_dir.join("forecast.csv")).len(), 3 * 14 * 3);
    assert_eq!(data_lines(&out_dir.join("intervals.csv")).len(), 3 * 14);
    assert_eq!(data_lines(&out_dir.join("weights.csv")).len(), 3 * 2);
}

#[test]
fn horizons_flag_limits_rows() {
    let f = Fixture::new();
    let out_dir = f.path("fc7");
    let out = f.run(&["forecast", "--horizons", "7", "--out", out_dir.to_str().unwrap()], true);
    assert_ok(&out);
    let rows = data_lines(&out_dir.join("forecast.csv"));
    assert_eq!(rows.len(), 3 * 7 * 3);
    for r in rows {
        let k: usize = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!((1..=7).contains(&k));
    }
}

#[test]
fn missing_adjacency_is_fatal_and_named() {
    let f = Fixture::new();
    let out = f.run(&["forecast", "--out", f.path("x").to_str().unwrap()], false);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "missing_input");
    assert!(err["message"].as_str().unwrap().contains("adjacency"));
}

#[test]
fn forecast_output_is_deterministic() {
    let f = Fixture::new();
    let a = f.path("a");
    let b = f.path("b");
    assert_ok(&f.run(&["forecast", "--out", a.to_str().unwrap()], true));
    assert_ok(&f.run(&["forecast", "--threads", "2", "--out", b.to_str().unwrap()], true));
    for name in ["forecast.csv", "intervals.csv", "weights.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn backtest_summary_shows_exact_linear_predictor() {
    let f = Fixture::new();
    let out_dir = f.path("bt");
    let out = f.run(
        &[
            "backtest",
            "--start",
            "2020-03-16",
            "--horizons",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        true,
    );
    assert_ok(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let median = summary["metrics"]["linear"]["3"]["mape"]["median"].as_f64().unwrap();
    assert!(median.abs() < 1e-9, "{median}");
    for name in ["metrics_daily.csv", "intervals_eval.csv", "trajectories.csv"] {
        assert!(!data_lines(&out_dir.join(name)).is_empty(), "{name}");
    }
}

#[test]
fn backtest_without_warm_up_is_fatal() {
    let f = Fixture::new();
    let out = f.run(&["backtest", "--start", "2020-03-05", "--out", f.path("bt").to_str().unwrap()], true);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "insufficient_warm_up");
}

#[test]
fn diagnose_synthetic_ranks_near_three_and_a_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_clep"))
        .args(["diagnose", "--synthetic", "10000", "--seed", "11", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_ok(&out);
    let rows = data_lines(&dir.path().join("rank_diagnostic.csv"));
    assert_eq!(rows.len(), 1);
    let fields: Vec<f64> = rows[0].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(fields[1], 10000.0);
    for r in &fields[2..] {
        assert!((r - 3.5).abs() < 0.1, "{fields:?}");
    }
}

#[test]
fn diagnose_panel_writes_rows() {
    let f = Fixture::new();
    let out_dir = f.path("dg");
    let out = f.run(&["diagnose", "--horizons", "1,3", "--out", out_dir.to_str().unwrap()], true);
    assert_ok(&out);
    assert_eq!(data_lines(&out_dir.join("rank_diagnostic.csv")).len(), 2);
}

#[test]
fn severity_three_hospitals_one_per_category() {
    let f = Fixture::new();
    let out_dir = f.path("sev");
    let hospitals = f.path("hospitals.csv");
    let out = f.run(
        &[
            "severity",
            "--hospitals",
            hospitals.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        true,
    );
    assert_ok(&out);
    let rows = data_lines(&out_dir.join("severity.csv"));
    let mut cats: Vec<String> = rows.iter().map(|r| r.rsplit(',').next().unwrap().to_string()).collect();
    cats.sort();
    assert_eq!(cats, vec!["high", "low", "medium"]);
}

#[test]
fn ingest_check_reports_panel_shape() {
    let f = Fixture::new();
    let out = f.run(&["ingest-check"], true);
    assert_ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["counties"], 3);
    assert_eq!(v["days"], DAYS);
    assert_eq!(v["start_date"], "2020-03-01");
    assert_eq!(v["has_neighbors"], true);
}
