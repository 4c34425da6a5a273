use std::process::{Command, Output};

fn rvl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvl"))
        .args(args)
        .env_remove("RVL_DEFAULT_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn fbm_path_csv() {
    let o = rvl(&["fbm", "--hurst", "0.3", "--n", "8", "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,value");
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[1], "0,0");
    let multi = rvl(&[
        "fbm", "--hurst", "0.3", "--n", "4", "--dim", "3", "--seed", "3",
    ]);
    assert!(stdout(&multi).starts_with("t,v1,v2,v3\n"));
}

#[test]
fn variation_csv_and_exit_codes() {
    let args = [
        "variation",
        "--hurst",
        "0.3",
        "--grids",
        "16,64",
        "--paths",
        "20",
        "--seed",
        "9",
    ];
    let a = rvl(&args);
    // Small grids cannot meet the default 5% tolerance: exit status 1.
    assert_eq!(a.status.code(), Some(1));
    assert!(stdout(&a).starts_with("n,estimate,target,abs_err,rel_err,stderr\n16,"));
    let b = rvl(&[&args[..], &["--workers", "3"]].concat());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_falls_back_to_environment() {
    let args = ["fbm", "--hurst", "0.4", "--n", "4"];
    let explicit = rvl(&[&args[..], &["--seed", "42"]].concat());
    let env = Command::new(env!("CARGO_BIN_EXE_rvl"))
        .args(args)
        .env("RVL_DEFAULT_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(explicit.stdout, env.stdout);
    assert_ne!(explicit.stdout, rvl(&args).stdout);
}

#[test]
fn gate_errors_exit_2() {
    let o = rvl(&["kernel-check", "--hurst", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires H < 1/2"));
    let o = rvl(&[
        "bessel",
        "--dim",
        "3",
        "--hurst",
        "0.35",
        "--experiment",
        "variation",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2dH^2 > 1"));
    let o = rvl(&["ito-check", "--hurst", "0.4", "--spec", "sine"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kernel_check_passes() {
    let o = rvl(&[
        "kernel-check",
        "--hurst",
        "0.3",
        "--tol",
        "1e-9",
        "--times",
        "0.5,1",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("t,s,lhs,rhs,rel_err\n"));
}

#[test]
fn run_config_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("report.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"experiment": "bessel-moments", "hurst": 0.45, "dimension": 3,
                "replications": 2000, "master_seed": 1,
                "tolerances": {{"slope": 0.1, "intercept": 0.1}},
                "output_path": {:?}}}"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = rvl(&["run", "--config", cfg.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(json["config"]["experiment"], "bessel-moments");
    assert!(json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));

    std::fs::write(
        &cfg,
        r#"{"experiment": "bessel-moments", "hurst": 0.45, "master_seed": 1, "extra": 1}"#,
    )
    .unwrap();
    let o = rvl(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
