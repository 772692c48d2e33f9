use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use icqkd::cli::{SWEEP_COLUMNS, TRANSCRIPT_COLUMNS};
use serde_json::Value;

fn icqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn run_writes_transcript_and_report_that_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "s.cfg",
        "n_c = 0.1\nrounds = 20000\nseed = 5\nerror_check_fraction = 0.2\n",
    );
    let transcript = dir.path().join("t.csv");
    let report = dir.path().join("r.json");
    let out = icqkd(&[
        "run",
        "--config",
        &config,
        "--transcript",
        transcript.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (header, rows) = read_csv(&transcript);
    assert_eq!(header, TRANSCRIPT_COLUMNS);
    assert_eq!(rows.len(), 20000);
    assert!(rows.iter().all(|r| r.len() == TRANSCRIPT_COLUMNS.len()));
    // without --audit the hidden columns stay empty
    assert!(rows.iter().all(|r| r[1].is_empty() && r[12].is_empty()));

    let col = |name: &str| TRANSCRIPT_COLUMNS.iter().position(|c| *c == name).unwrap();
    let coincident = rows.iter().filter(|r| r[col("coincident")] == "1").count();
    let disclosed = rows.iter().filter(|r| r[col("disclosed")] == "1").count();
    let mismatched = rows
        .iter()
        .filter(|r| r[col("coincident")] == "1" && r[col("disclosed")] == "0")
        .filter(|r| r[col("alice_bit")] != r[col("bob_bit")])
        .count();

    let json: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["rounds_total"], 20000);
    assert_eq!(json["coincident"], coincident);
    assert_eq!(json["disclosed"], disclosed);
    assert_eq!(json["sifted"], coincident - disclosed);
    assert_eq!(json["mismatches"], mismatched);
    assert_eq!(json["qber"], 0.0);
    assert_eq!(json["sift_rate"], 1.0);
    assert_eq!(json["eve_detection"], false);
    assert_eq!(json["config"]["seed"], 5);
}

#[test]
fn audit_transcript_exposes_source_phase() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "s.cfg", "n_c = 0.1\nrounds = 500\nseed = 1\n");
    let transcript = dir.path().join("t.csv");
    let out = icqkd(&[
        "run",
        "--config",
        &config,
        "--audit",
        "--quiet",
        "--transcript",
        transcript.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let (_, rows) = read_csv(&transcript);
    assert!(rows.iter().all(|r| r[1] == "90" || r[1] == "-90"));
}

#[test]
fn report_goes_to_stdout_without_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "s.cfg", "n_c = 0.1\nrounds = 1000\n");
    let out = icqkd(&["run", "--config", &config, "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let json: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["config"]["seed"], 9);
    assert_eq!(json["rounds_total"], 1000);
}

#[test]
fn intercept_resend_session_exits_with_abort_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "eve.cfg",
        "n_c = 0.1\nrounds = 20000\nseed = 3\nerror_check_fraction = 0.5\n\
         alpha_eta_intact = false\neve = intercept_resend\n",
    );
    let out = icqkd(&["run", "--config", &config, "--quiet"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("bad_nc.cfg", "n_c = -1\nrounds = 10\n", "n_c"),
        (
            "unknown.cfg",
            "n_c = 0.1\nrounds = 10\nbogus = 1\n",
            "bogus",
        ),
        ("missing.cfg", "n_c = 0.1\n", "rounds"),
        (
            "intact.cfg",
            "n_c = 0.1\nrounds = 10\neve = intercept_resend\n",
            "eve",
        ),
    ];
    for (name, text, key) in cases {
        let config = write_config(dir.path(), name, text);
        let out = icqkd(&["run", "--config", &config]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(key), "{name}: {stderr}");
    }
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = icqkd(&["run", "--config", "/nonexistent/dir/s.cfg"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unwritable_report_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "s.cfg", "n_c = 0.1\nrounds = 10\n");
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let report = blocker.join("r.json");
    let out = icqkd(&[
        "run",
        "--config",
        &config,
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_writes_one_report_and_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "s.cfg", "n_c = 0.1\nrounds = 5000\nseed = 2\n");
    let out_dir = dir.path().join("out");
    let out = icqkd(&[
        "sweep",
        "--config",
        &config,
        "--param",
        "transmittance",
        "--values",
        "1,0.8,0.6,0.4,0.2",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reports = fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "json")
        })
        .count();
    assert_eq!(reports, 5);
    let (header, rows) = read_csv(&out_dir.join("sweep.csv"));
    assert_eq!(header, SWEEP_COLUMNS);
    assert_eq!(rows.len(), 5);
    let seeds: std::collections::HashSet<_> = rows.iter().map(|r| r[2].clone()).collect();
    assert_eq!(seeds.len(), 5);
    let coincident: Vec<u64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(coincident.windows(2).all(|w| w[0] > w[1]), "{coincident:?}");
}

#[test]
fn eve_sweep_changes_qber() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "s.cfg",
        "n_c = 0.1\nrounds = 20000\nseed = 2\nalpha_eta_intact = false\n",
    );
    let out_dir = dir.path().join("out");
    let out = icqkd(&[
        "sweep",
        "--config",
        &config,
        "--param",
        "eve",
        "--values",
        "none,intercept_resend",
        "--matched-seeds",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (_, rows) = read_csv(&out_dir.join("sweep.csv"));
    assert_eq!(rows[0][2], rows[1][2]);
    let qber: Vec<f64> = rows.iter().map(|r| r[8].parse().unwrap()).collect();
    assert_eq!(qber[0], 0.0);
    assert!(qber[1] > 0.3, "{qber:?}");
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "s.cfg", "n_c = 0.1\nrounds = 10\n");
    let out_dir = dir.path().join("out");
    let out = icqkd(&[
        "sweep",
        "--config",
        &config,
        "--param",
        "n_c",
        "--values",
        "",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.join("sweep.csv").exists());
}

#[test]
fn truth_table_lists_sixteen_agreeing_rows() {
    let out = icqkd(&["truth-table"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert_eq!(text.lines().filter(|l| l.ends_with("yes")).count(), 16);
}

#[test]
fn validate_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "s.cfg",
        "# comment\nn_c = 0.2\nrounds = 100\ndetector.bob.efficiency = 0.5\neve = pns\n",
    );
    let out = icqkd(&["validate-config", "--config", &config]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let again = write_config(dir.path(), "again.cfg", &text);
    let out2 = icqkd(&["validate-config", "--config", &again]);
    assert_eq!(out2.status.code(), Some(0));
    assert_eq!(String::from_utf8(out2.stdout).unwrap(), text);
}
