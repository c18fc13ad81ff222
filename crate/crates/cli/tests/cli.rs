use std::path::Path;
use std::process::{Command, Output};

fn semirank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semirank"))
        .args(args)
        .output()
        .unwrap()
}

fn simulate(dir: &Path, n: &str, seed: &str) -> String {
    let path = dir.join(format!("sim_{n}_{seed}.csv"));
    let p = path.to_str().unwrap().to_string();
    let out = semirank(&[
        "simulate",
        "--scenario",
        "1",
        "--n",
        n,
        "--beta1",
        "0.25",
        "--gamma1",
        "0.25",
        "--seed",
        seed,
        "--out",
        &p,
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    p
}

#[test]
fn simulate_then_test() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), "60", "7");
    let out = semirank(&[
        "test",
        "--input",
        &input,
        "--outcome",
        "y",
        "--id",
        "id",
        "--covariates",
        "x1,x2",
        "--b",
        "29",
        "--seed",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["p_two_sided"].as_array().unwrap().len(), 2);
    assert_eq!(v["B"], 29);
    assert_eq!(v["n"], 60);
    let tsv = semirank(&[
        "test",
        "--input",
        &input,
        "--outcome",
        "y",
        "--id",
        "id",
        "--covariates",
        "x1,x2",
        "--b",
        "29",
        "--seed",
        "1",
        "--format",
        "tsv",
    ]);
    let text = String::from_utf8(tsv.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("covariate\tbeta_hat"));
}

#[test]
fn comparator_methods() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), "80", "3");
    for m in ["tobit", "logistic"] {
        let out = semirank(&[
            "test",
            "--input",
            &input,
            "--outcome",
            "y",
            "--id",
            "id",
            "--covariates",
            "x1,x2",
            "--method",
            m,
        ]);
        assert!(out.status.success());
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["model"], m);
        assert_eq!(v["interest"], "x1");
        let p = v["wald_p"].as_f64().unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate(dir.path(), "30", "1");
    // usage
    assert_eq!(
        semirank(&["test", "--input", &input]).status.code(),
        Some(1)
    );
    assert_eq!(semirank(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        semirank(&["simulate", "--scenario", "3", "--n", "5"])
            .status
            .code(),
        Some(1)
    );
    let out = semirank(&[
        "power-study",
        "--scenario",
        "1",
        "--n",
        "20",
        "--methods",
        "probit",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert_eq!(semirank(&["--help"]).status.code(), Some(0));
    // data
    let out = semirank(&[
        "test",
        "--input",
        &input,
        "--outcome",
        "y",
        "--id",
        "id",
        "--covariates",
        "x1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p >= 2"));
    assert!(out.stdout.is_empty());
    let missing = dir.path().join("missing.csv");
    let out = semirank(&[
        "test",
        "--input",
        missing.to_str().unwrap(),
        "--outcome",
        "y",
        "--id",
        "id",
        "--covariates",
        "x1,x2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let zeros = dir.path().join("zeros.csv");
    std::fs::write(&zeros, "id,y,a,b\n1,0,0,1\n1,0,1,2\n2,0,0,3\n2,0,1,0\n").unwrap();
    let out = semirank(&[
        "test",
        "--input",
        zeros.to_str().unwrap(),
        "--outcome",
        "y",
        "--id",
        "id",
        "--covariates",
        "a,b",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // numeric
    let out = semirank(&[
        "test",
        "--input",
        &input,
        "--outcome",
        "y",
        "--id",
        "id",
        "--covariates",
        "x1,x2",
        "--b",
        "5",
        "--h-mult",
        "1e-300",
    ]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
}

#[test]
fn simulate_to_stdout_matches_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), "25", "4");
    let out = semirank(&[
        "simulate",
        "--scenario",
        "1",
        "--n",
        "25",
        "--beta1",
        "0.25",
        "--gamma1",
        "0.25",
        "--seed",
        "4",
    ]);
    assert_eq!(out.stdout, std::fs::read(file).unwrap());
}

#[test]
fn power_study_formats() {
    let args = [
        "power-study",
        "--scenario",
        "2",
        "--n",
        "30",
        "--reps",
        "3",
        "--b",
        "19",
        "--seed",
        "5",
    ];
    let out = semirank(&args);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    let mut json_args = args.to_vec();
    json_args.extend(["--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&semirank(&json_args).stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["methods"].as_array().unwrap().len(), 3);
}
