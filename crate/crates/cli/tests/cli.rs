use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbl"))
        .args(args)
        .env("RBL_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const QUARTET: [&str; 8] = ["--a", "pi/2", "--a2", "0", "--b", "-pi/4", "--b2", "pi/4"];

#[test]
fn analytic_hardy_paper_value() {
    let mut args = vec![
        "analytic",
        "--model",
        "hardy",
        "--ineq",
        "same_retarded_chsh",
    ];
    args.extend(QUARTET);
    let out = rbl(&args);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("value -1.414214"), "{stderr}");
    assert!(stderr.contains("verdict satisfied"), "{stderr}");
    let json = stdout_json(&out);
    assert!((json["value"].as_f64().unwrap() + std::f64::consts::SQRT_2).abs() < 1e-9);
    assert_eq!(json["margin_sigma"], "-inf");
}

#[test]
fn analytic_quantum_chsh_is_violated() {
    let mut args = vec!["analytic", "--model", "quantum", "--ineq", "chsh"];
    args.extend(QUARTET);
    let out = rbl(&args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("value -2.828427"));
    assert_eq!(stdout_json(&out)["verdict"], "violated");
}

#[test]
fn analytic_rejects_bad_input() {
    let out = rbl(&[
        "analytic", "--model", "bohm", "--ineq", "chsh", "--a", "0", "--a2", "0", "--b", "0",
        "--b2", "0",
    ]);
    assert_ne!(out.status.code(), Some(0));
    let out = rbl(&["analytic", "--model", "hardy", "--ineq", "chsh", "--a", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_on_empty_table_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("empty.csv");
    std::fs::write(&table, "a,b,a_r,b_r,E,SE,count,sufficient\n").unwrap();
    let out = rbl(&[
        "check",
        "--table",
        table.to_str().unwrap(),
        "--ineq",
        "retarded_chsh",
        "--a",
        "a",
        "--a2",
        "a'",
        "--b",
        "b",
        "--b2",
        "b'",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_then_check_reproduces_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = configs().join("weihs-quantum.conf");
    let out = rbl(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--n",
        "100000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let code = out.status.code();
    assert!(
        code == Some(0) || code == Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "trials.csv",
        "table.csv",
        "reports.json",
        "classification.json",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("reports.json")).unwrap())
            .unwrap();
    let table = out_dir.join("table.csv");
    let trials = out_dir.join("trials.csv");
    let mut compared = 0;
    for r in reports["reports"].as_array().unwrap() {
        let name = r["name"].as_str().unwrap();
        let source = match name {
            "retarded_chsh" => ["--table", table.to_str().unwrap()],
            "retarded_ch" => ["--trials", trials.to_str().unwrap()],
            _ => continue,
        };
        let i = &r["inputs"];
        let label = |k: &str| i[k].as_str().unwrap().to_string();
        let args: Vec<String> = [
            "check",
            source[0],
            source[1],
            "--ineq",
            name,
            "--min-count",
            "100",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain(
            [
                ("--a", "a"),
                ("--a2", "a'"),
                ("--b", "b"),
                ("--b2", "b'"),
                ("--ar", "a_r"),
                ("--a2r", "a'_r"),
                ("--br", "b_r"),
                ("--b2r", "b'_r"),
            ]
            .iter()
            .flat_map(|(flag, key)| [flag.to_string(), label(key)]),
        )
        .collect();
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = rbl(&args);
        let expected_code = if r["verdict"] == "violated" { 3 } else { 0 };
        assert_eq!(
            out.status.code(),
            Some(expected_code),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let json = stdout_json(&out);
        assert_eq!(
            json["value"].as_f64().unwrap().to_bits(),
            r["value"].as_f64().unwrap().to_bits()
        );
        compared += 1;
        if compared >= 6 {
            break;
        }
    }
    assert!(compared >= 2);
}

#[test]
fn run_exit_code_reflects_violation() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("aspect.conf");
    // Retarded settings equal actual ones: the local model reproduces the
    // quantum correlations and the standard CHSH is violated.
    let out = rbl(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--n",
        "20000",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("both-equal 1.000000"), "{stdout}");
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("weihs.conf");
    let mut outputs = Vec::new();
    for workers in ["0", "1", "4"] {
        let out_dir = dir.path().join(workers);
        let status = Command::new(env!("CARGO_BIN_EXE_rbl"))
            .args([
                "run",
                "--config",
                config.to_str().unwrap(),
                "--n",
                "80000",
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .env("RBL_WORKERS", workers)
            .output()
            .unwrap()
            .status;
        assert!(matches!(status.code(), Some(0) | Some(3)));
        outputs.push((
            std::fs::read(out_dir.join("trials.csv")).unwrap(),
            std::fs::read(out_dir.join("table.csv")).unwrap(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn run_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("aspect.conf")).unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, text.replace("seed = 1", "seed = 1\nturbo = yes")).unwrap();
    let out = rbl(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("turbo"));
}

#[test]
fn optimize_inline_and_from_spec() {
    let out = rbl(&["optimize", "--model", "quantum", "--ineq", "chsh"]);
    assert_eq!(out.status.code(), Some(0));
    let json = stdout_json(&out);
    assert!((json["value"].as_f64().unwrap() + 2.0 * std::f64::consts::SQRT_2).abs() < 1e-6);
    for key in ["settings", "value", "evaluations", "trace"] {
        assert!(json.get(key).is_some(), "{key}");
    }

    let spec = configs().join("hardy-optimum.json");
    let out = rbl(&["optimize", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!((stdout_json(&out)["value"].as_f64().unwrap() + 2.0).abs() < 1e-6);

    let out = rbl(&[
        "optimize",
        "--model",
        "hardy",
        "--ineq",
        "retarded_chsh",
        "--pattern",
        "tied",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes() {
    let out = rbl(&["verify", "--n", "20000"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.contains("PASS chsh_identity"));
}
