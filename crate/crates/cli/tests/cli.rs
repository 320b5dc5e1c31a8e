use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use newmark_bea::io::load_matrix_market;

fn newmark(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newmark"))
        .args(args)
        .current_dir(dir)
        .env_remove("NEWMARK_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const OSCILLATOR: &str = r#"{
    "system": { "builtin": "oscillator-1dof" },
    "methods": [
        { "name": "newmark", "gamma": 0.5, "beta": "1/6", "label": "plain", "expected_order": 2 },
        { "name": "newmark", "gamma": 0.5, "beta": "1/6", "compensation": "fourth-order", "label": "n4c", "expected_order": 4 },
        { "name": "rk4", "expected_order": 4 }
    ],
    "run": { "dt": 0.0125, "halvings": 4, "t_end": 0.4, "reference": "exact" }
}"#;

const MASS: [[f64; 3]; 3] = [[4.6965, 1.4187, 1.6038], [1.4187, 4.7195, 1.5540], [1.6038, 1.5540, 4.4809]];
const STIFFNESS: [[f64; 3]; 3] = [[4.5316, 1.6906, 1.6784], [1.6906, 4.7245, 1.4670], [1.6784, 1.4670, 4.3618]];
const DAMPING: [[f64; 3]; 3] = [
    [0.033921, 0.003909, 0.007335],
    [0.003909, 0.030597, 0.002903],
    [0.007335, 0.002903, 0.031755],
];

fn dense(rows: &[[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| rows[i][j])
}

fn rows_json(rows: &[[f64; 3]; 3]) -> String {
    serde_json_rows(rows.iter().map(|r| r.to_vec()).collect())
}

fn serde_json_rows(rows: Vec<Vec<f64>>) -> String {
    let inner: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", inner.join(", "))
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = newmark(&[], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(newmark(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(newmark(&["run"], dir.path()).status.code(), Some(2));
}

#[test]
fn broken_config_exits_1_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), OSCILLATOR.replace("\"t_end\"", "\"t_fin\"")).unwrap();
    let o = newmark(&["run", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("t_fin"), "{}", stderr(&o));
    let o = newmark(&["run", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn converge_ci_passes_and_fails_on_expectations() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("oscillator.json"), OSCILLATOR).unwrap();
    let o = newmark(&["converge", "--config", "oscillator.json", "--ci", "--format", "both"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.starts_with("method,dt,error_q,error_v,floor_q,floor_v"));
    assert_eq!(report.lines().count(), 1 + 3 * 5);
    assert!(dir.path().join("out/report.svg").exists());
    assert!(dir.path().join("out/manifest.json").exists());

    let wrong = OSCILLATOR.replace("\"label\": \"plain\", \"expected_order\": 2", "\"label\": \"plain\", \"expected_order\": 3");
    fs::write(dir.path().join("wrong.json"), wrong).unwrap();
    let o = newmark(&["converge", "--config", "wrong.json", "--ci"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("plain"), "{}", stderr(&o));
    let o = newmark(&["converge", "--config", "wrong.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn compensate_matches_an_independent_dense_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let doc = format!(
        r#"{{
            "system": {{ "mass": {}, "damping": {}, "stiffness": {} }},
            "methods": [ {{ "name": "newmark", "gamma": 0.5, "beta": "1/6" }} ],
            "run": {{ "dt": 0.7, "t_end": 7 }}
        }}"#,
        rows_json(&MASS),
        rows_json(&DAMPING),
        rows_json(&STIFFNESS)
    );
    fs::write(dir.path().join("three.json"), doc).unwrap();
    let o = newmark(&["compensate", "--kind", "fourth-order", "--config", "three.json", "--out", "comp"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let (m, c, k) = (dense(&MASS), dense(&DAMPING), dense(&STIFFNESS));
    let mi = m.clone().try_inverse().unwrap();
    let w = 0.7f64 * 0.7 / 12.0;
    let k_hat = &k + (&k * &mi * &k - &c * &mi * &c * &mi * &k) * w;
    let c_hat = &c + (&c * &mi * &k + &k * &mi * &c - &c * &mi * &c * &mi * &c) * w;

    let got_k = load_matrix_market(dir.path().join("comp/stiffness.mtx")).unwrap();
    let got_c = load_matrix_market(dir.path().join("comp/damping.mtx")).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((got_k.get(i, j) - k_hat[(i, j)]).abs() < 1e-12, "K({i},{j})");
            assert!((got_c.get(i, j) - c_hat[(i, j)]).abs() < 1e-12, "C({i},{j})");
        }
    }
    assert!((got_k.get(0, 0) - k_hat[(0, 0)]).abs() < 1e-12);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comp/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "fourth-order");
    assert_eq!(manifest["dt"], 0.7);
    let forcing = fs::read_to_string(dir.path().join("comp/forcing.csv")).unwrap();
    assert_eq!(forcing.lines().count(), 1 + 11);

    let o = newmark(&["compensate", "--kind", "fourth-order", "--config", "three.json", "--gamma", "0.6"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn environment_overrides_the_configured_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("oscillator.json"), OSCILLATOR).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_newmark"))
        .args(["run", "--config", "oscillator.json"])
        .current_dir(dir.path())
        .env("NEWMARK_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("from-env/trajectory-n4c.csv").exists());
    assert!(!dir.path().join("out").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_newmark"))
        .args(["run", "--config", "oscillator.json", "--out", "flag"])
        .current_dir(dir.path())
        .env("NEWMARK_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("flag/trajectory-plain.csv").exists());
}

#[test]
fn data_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("oscillator.json"), OSCILLATOR).unwrap();
    for out in ["a", "b"] {
        let o = newmark(&["energy", "--config", "oscillator.json", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/energy.csv")).unwrap();
    let b = fs::read(dir.path().join("b/energy.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn builtin_scenarios_are_listed_and_runnable() {
    let dir = tempfile::tempdir().unwrap();
    let o = newmark(&["list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("fourth-order-1dof"));
    let o = newmark(&["bench", "--scenario", "fourth-order-1dof", "--repeats", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bench = fs::read_to_string(dir.path().join("out/bench.csv")).unwrap();
    assert!(bench.lines().count() > 4);
}

#[test]
fn shipped_scenarios_load_and_the_oscillator_meets_its_orders() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            newmark_bea::io::load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);

    let dir = tempfile::tempdir().unwrap();
    let config = root.join("oscillator.json");
    let o = newmark(&["converge", "--ci", "--config", config.to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
