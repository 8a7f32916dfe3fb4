use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn qgate(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qgate"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run qgate");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn zero_pulse_csv(steps: usize, dt: f64) -> String {
    let mut s = String::from("t,u1x,u1y,u2x,u2y\n");
    for k in 0..steps {
        s.push_str(&format!("{},0,0,0,0\n", k as f64 * dt));
    }
    s
}

#[test]
fn synth_writes_pulses_and_report() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"gate": "cnot", "maxIterations": 3}"#,
    );
    let (code, err) = qgate(
        &[
            "synth",
            "--config",
            "c.json",
            "--out-pulses",
            "p.csv",
            "--out-report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let pulses = read(dir.path(), "p.csv");
    assert_eq!(pulses.lines().count(), 101);
    assert_eq!(pulses.lines().next().unwrap(), "t,u1x,u1y,u2x,u2y");
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "r.json")).unwrap();
    assert_eq!(report["iterationsUsed"], 3);
    assert!(report["finalError"].as_f64().unwrap() < report["initialError"].as_f64().unwrap());
    assert_eq!(
        report["accepted"].as_array().unwrap().len(),
        report["lambdaTrace"].as_array().unwrap().len()
    );
}

#[test]
fn malformed_config_names_the_key() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "c.json",
        "{\n  \"gate\": \"cnot\",\n  \"horizon\": \"long\"\n}",
    );
    let (code, err) = qgate(
        &[
            "synth",
            "--config",
            "c.json",
            "--out-pulses",
            "p.csv",
            "--out-report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
    assert!(err.contains("horizon"), "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert!(!dir.path().join("p.csv").exists());

    write(dir.path(), "c.json", r#"{"gate": "toffoli"}"#);
    let (code, err) = qgate(
        &[
            "synth",
            "--config",
            "c.json",
            "--out-pulses",
            "p.csv",
            "--out-report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
    assert!(err.contains("gate"), "{err}");

    let (code, _) = qgate(
        &[
            "synth",
            "--config",
            "missing.json",
            "--out-pulses",
            "p.csv",
            "--out-report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
}

#[test]
fn stagnation_exits_with_2_and_partial_report() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "c.json",
        r#"{"objective": "innerProduct", "lambda0": 1e-9, "maxDoublings": 0, "steps": 10}"#,
    );
    let (code, err) = qgate(
        &[
            "synth",
            "--config",
            "c.json",
            "--out-pulses",
            "p.csv",
            "--out-report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code, 2, "{err}");
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "r.json")).unwrap();
    assert_eq!(report["stopReason"], "stagnation");
    assert_eq!(
        report["accepted"].as_array().unwrap().last().unwrap(),
        false
    );
    assert_eq!(read(dir.path(), "p.csv").lines().count(), 11);
}

#[test]
fn validate_zero_pulse_grid() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.json", r#"{"gate": "cnot"}"#);
    write(dir.path(), "p.csv", &zero_pulse_csv(100, 0.01));
    let (code, err) = qgate(
        &[
            "validate", "--config", "c.json", "--pulses", "p.csv", "--grid", "2x2", "--out",
            "g.csv",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let grid = read(dir.path(), "g.csv");
    let mut lines = grid.lines();
    assert_eq!(lines.next().unwrap(), "alpha,beta,error");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!((rows[0][0], rows[0][1]), (0.0, 0.8));
    assert_eq!((rows[1][0], rows[1][1]), (0.0, 1.2));
    assert_eq!((rows[2][0], rows[2][1]), (2.0, 0.8));
    for r in &rows {
        assert!((r[2] - 2f64.sqrt()).abs() < 1e-12);
    }

    let (code, _) = qgate(
        &[
            "validate", "--config", "c.json", "--pulses", "p.csv", "--grid", "21x21", "--out",
            "g.csv",
        ],
        dir.path(),
    );
    assert_eq!(code, 0);
    let grid = read(dir.path(), "g.csv");
    assert_eq!(grid.lines().count(), 442);
    assert!(grid
        .lines()
        .skip(1)
        .all(|l| !l.rsplit(',').next().unwrap().starts_with('-')));
}

#[test]
fn validate_rejects_step_mismatch_and_bad_grid() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.json", r#"{"gate": "cnot"}"#);
    write(dir.path(), "p.csv", &zero_pulse_csv(50, 0.01));
    let (code, err) = qgate(
        &[
            "validate", "--config", "c.json", "--pulses", "p.csv", "--grid", "3x3", "--out",
            "g.csv",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
    assert!(err.contains("steps"), "{err}");

    write(dir.path(), "p.csv", &zero_pulse_csv(100, 0.01));
    let (code, _) = qgate(
        &[
            "validate", "--config", "c.json", "--pulses", "p.csv", "--grid", "3by3", "--out",
            "g.csv",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
}

#[test]
fn simulate_writes_population_trace() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.json", r#"{"gate": "swap"}"#);
    write(dir.path(), "p.csv", &zero_pulse_csv(100, 0.01));
    let (code, err) = qgate(
        &[
            "simulate", "--config", "c.json", "--pulses", "p.csv", "--alpha", "1", "--beta", "1",
            "--out", "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let text = read(dir.path(), "t.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,p00,p01,p10,p11,trace,purity");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 101);
    for r in &rows {
        assert_eq!(&r[1..5], &[0.0, 1.0, 0.0, 0.0]);
        assert!((r[5] - 1.0).abs() < 1e-10);
    }

    let (code, err) = qgate(
        &[
            "simulate", "--config", "c.json", "--pulses", "p.csv", "--alpha", "3", "--beta", "1",
            "--out", "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
    assert!(err.contains("outside"), "{err}");
}

#[test]
fn threads_variable_is_checked() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "c.json", r#"{"gate": "cnot"}"#);
    write(dir.path(), "p.csv", &zero_pulse_csv(100, 0.01));
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_qgate"))
            .args([
                "validate", "--config", "c.json", "--pulses", "p.csv", "--grid", "3x3", "--out",
                "g.csv",
            ])
            .env("THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run("1"), Some(0));
    let single = read(dir.path(), "g.csv");
    assert_eq!(run("3"), Some(0));
    assert_eq!(read(dir.path(), "g.csv"), single);
    assert_eq!(run("zero"), Some(1));
}
