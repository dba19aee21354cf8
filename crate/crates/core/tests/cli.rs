//! End-to-end runs of the command-line front end.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use floquet_core::cli::main_with_args;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data").join(name)
}

fn run(input: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "floquet".to_string(),
        "--input".into(),
        input.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn check_conditions_reports_three_ladder_condition() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&data("ladders_n4.json"), dir.path(), &["--command", "check-conditions"]), 0);
    let c = json(&dir.path().join("criteria.json"));
    assert_eq!(c["c_applies"], true);
    assert_eq!(c["alpha_bound"], 0.125);
    assert_eq!(c["prediction"], "finitely_many_gaps");
    assert!(dir.path().join("meta.json").exists());
}

#[test]
fn bands_of_free_third_order_operator() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("free.json");
    fs::write(&input, r#"{"n": 3, "m": 1}"#).unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&input, &out, &["--command", "bands", "--k-min", "1", "--k-max", "3", "--t-points", "33"]), 0);
    let csv = fs::read_to_string(out.join("bands.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,j,t,lambda,continuity_ok,tracking_flagged");
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let k: f64 = cols[0].parse().unwrap();
        let t: f64 = cols[2].parse().unwrap();
        let lam: f64 = cols[3].parse().unwrap();
        let want = (2.0 * PI * k + t).powi(3);
        assert!((lam - want).abs() <= 1e-9 * want.abs());
        rows += 1;
    }
    assert_eq!(rows, 3 * 33);
    let meta = json(&out.join("meta.json"));
    assert_eq!(meta["truncation_resolved"], 16);
}

#[test]
fn verify_asymptotics_on_constant_mean_has_zero_residuals() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&data("constant_n4.json"), dir.path(), &["--command", "verify-asymptotics", "--k-min", "2", "--k-max", "6", "--t", "0.8"]), 0);
    let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (res, lam) = (col("residual"), col("lambda_computed"));
    let mut rows = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let r: f64 = cols[res].parse().unwrap();
        let l: f64 = cols[lam].parse().unwrap();
        assert!(r <= 1e-9 * l.abs().max(1.0));
        rows += 1;
    }
    assert_eq!(rows, 10);
    let meta = json(&dir.path().join("meta.json"));
    assert!(meta["fitted_constants"]["c_delta"].as_f64().unwrap().abs() < 1e-6);
    assert_eq!(meta["convergence"][0]["passed"], true);
}

#[test]
fn gaps_of_hill_operator_are_cross_checked() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&data("mathieu_n2.json"), dir.path(), &["--command", "gaps", "--k-min", "0", "--k-max", "4", "--t-points", "65"]), 0);
    let g = json(&dir.path().join("gaps.json"));
    let gaps = g["gaps"].as_array().unwrap();
    assert!(!gaps.is_empty());
    for c in g["cross_checks"].as_array().unwrap() {
        if c["resolvable"] == true {
            assert_eq!(c["member"], c["expected"], "{c}");
        }
    }
    // The fourth gap is about 1e-5 wide and below the multiplier resolution.
    assert_eq!(g["cross_checks"].as_array().unwrap().iter().filter(|c| c["resolvable"] == false).count(), 1);
    assert_eq!(json(&dir.path().join("criteria.json"))["prediction"], "no_conclusion");
}

#[test]
fn chardet_table_lists_all_multipliers() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--command", "chardet", "--lambda-min", "-20", "--lambda-max", "40", "--lambda-points", "5"];
    assert_eq!(run(&data("cosine_n3.json"), dir.path(), &args), 0);
    let csv = fs::read_to_string(dir.path().join("chardet.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lambda,root,re,im,modulus,t,unimodular");
    assert_eq!(lines.len(), 1 + 5 * 3);
    // n m = 3 is odd: every lambda has a unimodular multiplier.
    for chunk in lines[1..].chunks(3) {
        assert!(chunk.iter().any(|l| l.ends_with(",true")));
    }
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--command", "bands", "--k-min", "-2", "--k-max", "2", "--t-points", "17", "--format", "json"];
    assert_eq!(run(&data("perturbed_n3.json"), a.path(), &args), 0);
    assert_eq!(run(&data("perturbed_n3.json"), b.path(), &args), 0);
    for name in ["bands.json", "meta.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n": 1, "m": 1}"#).unwrap();
    assert_eq!(run(&bad, dir.path(), &["--command", "check-conditions"]), 1);
    assert_eq!(run(&dir.path().join("missing.json"), dir.path(), &["--command", "bands"]), 1);
    assert_eq!(run(&data("free_n3_m2.json"), dir.path(), &["--command", "bands", "--t-points", "9"]), 1);

    let non_herm = dir.path().join("nonherm.json");
    fs::write(&non_herm, r#"{"n": 3, "m": 2, "coefficients": [{"nu": 2, "harmonics": [{"p": 0, "matrix": [[1, 2], [0, 1]]}]}]}"#).unwrap();
    assert_eq!(run(&non_herm, dir.path(), &["--command", "verify-asymptotics"]), 3);

    let raw = dir.path().join("raw.json");
    fs::write(&raw, r#"{"n": 3, "m": 1, "coefficients": [{"nu": 2, "harmonics": [{"p": 1, "matrix": [[1]]}, {"p": -1, "matrix": [[1]]}]}]}"#).unwrap();
    assert_eq!(run(&raw, dir.path(), &["--command", "gaps"]), 3);

    assert_eq!(run(&data("free_n3_m2.json"), dir.path(), &["--command", "verify-asymptotics", "--k-max", "20", "--truncation", "10"]), 2);
}
