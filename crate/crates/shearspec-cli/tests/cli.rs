//! End-to-end tests of the `shearspec` binary: subcommand output, config
//! layering, determinism, and exit codes.

use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

const ENV_VARS: [&str; 11] = [
    "SHEARSPEC_PROFILE",
    "SHEARSPEC_NU",
    "SHEARSPEC_EPS",
    "SHEARSPEC_ALPHA",
    "SHEARSPEC_K",
    "SHEARSPEC_N",
    "SHEARSPEC_S",
    "SHEARSPEC_NODES",
    "SHEARSPEC_CONFIG",
    "SHEARSPEC_OUTPUT",
    "SHEARSPEC_FORMAT",
];

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shearspec"));
    for var in ENV_VARS {
        cmd.env_remove(var);
    }
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "expected success, stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_json(out: &Output, code: i32) -> Value {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {} stderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn f(v: &Value, ptr: &str) -> f64 {
    v.pointer(ptr)
        .and_then(Value::as_f64)
        .unwrap_or_else(|| panic!("missing number at {}", ptr))
}

fn s<'a>(v: &'a Value, ptr: &str) -> &'a str {
    v.pointer(ptr)
        .and_then(Value::as_str)
        .unwrap_or_else(|| panic!("missing string at {}", ptr))
}

#[test]
fn unstable_matches_the_dispersion_prediction() {
    let out = run(&[
        "unstable",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--N",
        "32",
    ]);
    let doc = json_stdout(&out);
    assert_eq!(f(&doc, "/prediction/re"), 1.2500000000000006e-5);
    assert!(f(&doc, "/deviation") <= 0.1 * 1.25e-5);
    assert!(f(&doc, "/unstable/re") > 0.0);
    assert!(f(&doc, "/unstable/residual") < 1e-9);
    let eigs = doc["eigenvalues"].as_array().unwrap();
    assert_eq!(eigs.len(), 65);
    let unstable_count = eigs.iter().filter(|e| e["tag"] == "unstable").count();
    assert_eq!(unstable_count, 1);
    for m in doc["methods"].as_array().unwrap() {
        assert!(f(m, "/gap") < 1e-8 * 0.5);
        assert!(f(m, "/alignment") >= 1.0 - 1e-6);
    }
}

#[test]
fn stable_viscosity_reports_no_unstable_mode() {
    let out = run(&[
        "unstable",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.8",
        "--eps",
        "0.005",
    ]);
    let doc = json_stdout(&out);
    assert!(doc["unstable"].is_null());
    assert!(f(&doc, "/eigenvalues/0/re") < 0.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "unstable",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert!(!first.stdout.is_empty());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn sweep_output_ignores_worker_count_and_input_order() {
    let one = run(&[
        "sweep",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps-list",
        "1e-2,5e-3,2.5e-3",
        "--jobs",
        "1",
    ]);
    let three = run(&[
        "sweep",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps-list",
        "5e-3,2.5e-3,1e-2",
        "--jobs",
        "3",
    ]);
    assert!(one.status.success());
    assert_eq!(one.stdout, three.stdout);
    let doc = json_stdout(&one);
    let eps: Vec<f64> = doc["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| f(p, "/eps"))
        .collect();
    assert_eq!(eps, vec![2.5e-3, 5e-3, 1e-2]);
    assert!(f(&doc, "/slope") >= 0.9);
    assert_eq!(doc["first_order"], Value::Bool(true));
}

#[test]
fn flags_override_environment_which_overrides_file() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        file,
        "[params]\nprofile = \"kolmogorov\"\nnu = 0.8\neps = 0.005"
    )
    .unwrap();
    let path = file.path().to_str().unwrap().to_string();

    let from_file = json_stdout(&run(&["taylor", "--config", &path]));
    assert_eq!(f(&from_file, "/params/nu"), 0.8);

    let mut cmd = bin();
    cmd.args(["taylor", "--config", &path]);
    cmd.env("SHEARSPEC_NU", "0.6");
    let from_env = json_stdout(&cmd.output().unwrap());
    assert_eq!(f(&from_env, "/params/nu"), 0.6);

    let mut cmd = bin();
    cmd.args(["taylor", "--config", &path, "--nu", "0.5"]);
    cmd.env("SHEARSPEC_NU", "0.6");
    let from_flag = json_stdout(&cmd.output().unwrap());
    assert_eq!(f(&from_flag, "/params/nu"), 0.5);
}

#[test]
fn conflicting_wavenumber_flags_exit_with_config_error() {
    let out = run(&[
        "unstable",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--alpha",
        "1e-3",
        "--k",
        "2",
    ]);
    let err = error_json(&out, 2);
    assert_eq!(s(&err, "/kind"), "config");
    assert!(s(&err, "/error").contains("eps"));
    assert!(s(&err, "/error").contains("alpha"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = run(&["spectrum", "--profile", "couette", "--nu", "0.5", "--eps", "0.005"]);
    let err = error_json(&out, 2);
    assert_eq!(s(&err, "/kind"), "config");
    assert!(s(&err, "/error").contains("couette"));
}

#[test]
fn missing_viscosity_names_the_field() {
    let out = run(&["spectrum", "--profile", "kolmogorov", "--eps", "0.005"]);
    let err = error_json(&out, 2);
    assert_eq!(s(&err, "/kind"), "config");
    assert!(s(&err, "/error").contains("nu"));
}

#[test]
fn truncation_below_the_band_names_the_field() {
    let out = run(&[
        "spectrum",
        "--profile",
        "sin1cos5",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--N",
        "6",
    ]);
    let err = error_json(&out, 2);
    assert!(s(&err, "/error").contains("N"));
}

#[test]
fn negative_wavenumber_conjugates_the_report() {
    let plus = json_stdout(&run(&[
        "normalform",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--alpha",
        "2.5e-3",
        "--k",
        "2",
    ]));
    let minus = json_stdout(&run(&[
        "normalform",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--alpha",
        "2.5e-3",
        "--k",
        "-2",
    ]));
    assert_eq!(f(&plus, "/params/eps"), 0.005);
    assert_eq!(f(&minus, "/params/eps"), 0.005);
    assert_eq!(f(&plus, "/lambda0/re"), f(&minus, "/lambda0/re"));
    assert_eq!(f(&plus, "/lambda0/im"), -f(&minus, "/lambda0/im"));
    let plus_x = plus["x"].as_array().unwrap();
    let minus_x = minus["x"].as_array().unwrap();
    assert_eq!(plus_x.len(), minus_x.len());
    for pm in plus_x {
        let j = pm["j"].as_i64().unwrap();
        let mirrored = minus_x
            .iter()
            .find(|mm| mm["j"].as_i64() == Some(-j))
            .expect("mirrored mode present");
        assert_eq!(f(pm, "/re"), f(mirrored, "/re"));
        assert_eq!(f(pm, "/im"), -f(mirrored, "/im"));
    }
}

#[test]
fn field_matches_the_separable_reference() {
    let out = run(&[
        "field",
        "--profile",
        "sin1cos5",
        "--nu",
        "0.5",
        "--eps",
        "0.01",
        "--grid",
        "48x48",
        "--N",
        "12",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,value"));
    let mut dot = 0.0;
    let mut nv = 0.0;
    let mut nr = 0.0;
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let (x, y, value) = (cols[0], cols[1], cols[2]);
        let reference = x.cos() * (y.sin() + (5.0 * y).cos());
        dot += value * reference;
        nv += value * value;
        nr += reference * reference;
        rows += 1;
    }
    assert_eq!(rows, 48 * 48);
    assert!(dot / (nv.sqrt() * nr.sqrt()) >= 0.99);
}

#[test]
fn taylor_matches_the_closed_form() {
    let out = run(&[
        "taylor",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
    ]);
    let doc = json_stdout(&out);
    assert_eq!(f(&doc, "/prediction/re"), -3.750000000000001e-5);
    assert!((f(&doc, "/mu/re") + 3.75e-5).abs() < 1e-6);
    assert!(f(&doc, "/normalized_error") < 1e-3);
}

#[test]
fn custom_profile_triples_round_trip() {
    let first = run(&[
        "spectrum",
        "--profile",
        "1:0:-0.5,-1:0:0.5",
        "--nu",
        "0.5",
        "--eps",
        "0.1",
        "--N",
        "8",
    ]);
    let doc = json_stdout(&first);
    assert_eq!(s(&doc, "/profile/name"), "custom");
    let triples: Vec<String> = doc["profile"]["modes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| {
            format!(
                "{}:{}:{}",
                m["j"].as_i64().unwrap(),
                f(m, "/re"),
                f(m, "/im")
            )
        })
        .collect();
    let second = run(&[
        "spectrum",
        "--profile",
        &triples.join(","),
        "--nu",
        "0.5",
        "--eps",
        "0.1",
        "--N",
        "8",
    ]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn out_of_regime_parameters_exit_with_regime_error() {
    let out = run(&[
        "unstable",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.05",
        "--eps",
        "1e-2",
    ]);
    let err = error_json(&out, 3);
    assert_eq!(s(&err, "/kind"), "regime");
}

#[test]
fn normalform_report_is_decoupled() {
    let out = run(&[
        "normalform",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--blocks",
        "3",
    ]);
    let doc = json_stdout(&out);
    assert!(f(&doc, "/residual_b") <= 1e-10);
    assert!(f(&doc, "/residual_c") <= 1e-10);
    assert!(f(&doc, "/off_diagonal_residual") <= 1e-10);
    let blocks = doc["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 3);
    for (i, b) in blocks.iter().enumerate() {
        let j = (i + 1) as f64;
        assert_eq!(b["block"].as_u64(), Some(i as u64 + 1));
        let re = f(b, "/eigenvalues/0/re");
        assert!((re + 0.5 * j * j).abs() < 10.0 * 0.005);
    }
}

#[test]
fn kato_projections_are_idempotent_with_expected_ranks() {
    let out = run(&[
        "kato",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--blocks",
        "3",
        "--nodes",
        "256",
    ]);
    let doc = json_stdout(&out);
    assert!(f(&doc, "/unstable/residual") <= 1e-9);
    for p in doc["projections"].as_array().unwrap() {
        assert!(f(p, "/idempotency_defect") <= 1e-10);
        let expected_rank = if p["block"].as_u64() == Some(0) { 1 } else { 2 };
        assert_eq!(p["rank"].as_u64(), Some(expected_rank));
        assert_eq!(s(p, "/source"), "linearized");
    }
}

#[test]
fn convergence_tables_shrink_toward_the_finest() {
    let out = run(&[
        "convergence",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--n-list",
        "8,16,32",
        "--nodes-list",
        "32,64,128",
    ]);
    let doc = json_stdout(&out);
    let trunc = doc["truncation"].as_array().unwrap();
    assert_eq!(trunc.len(), 3);
    assert_eq!(f(&doc, "/truncation/2/gap_to_finest"), 0.0);
    assert!(f(&doc, "/truncation/0/gap_to_finest") < 1e-9);
    let quad = doc["quadrature"].as_array().unwrap();
    assert_eq!(quad.len(), 3);
    assert_eq!(f(&doc, "/quadrature/2/gap_to_finest"), 0.0);
    assert!(f(&doc, "/quadrature/2/idempotency_defect") <= 1e-10);
    assert!(f(&doc, "/quadrature/0/gap_to_finest") < 1e-10);
}

#[test]
fn output_file_receives_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "taylor",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(s(&doc, "/command"), "taylor");
}

#[test]
fn csv_format_emits_tables() {
    let out = run(&[
        "spectrum",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.1",
        "--N",
        "8",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "re,im,block,tag");
    assert_eq!(lines.len(), 1 + 17);
    assert!(lines[1].ends_with("unstable") || lines[1].ends_with("stable"));
}

#[test]
fn viscosity_sweep_reports_points_in_order() {
    let out = run(&[
        "sweep",
        "--profile",
        "kolmogorov",
        "--nu-list",
        "0.8,0.6",
        "--eps",
        "1e-3",
    ]);
    let doc = json_stdout(&out);
    assert_eq!(s(&doc, "/parameter"), "nu");
    assert!(doc["params"]["nu"].is_null());
    let nus: Vec<f64> = doc["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| f(p, "/nu"))
        .collect();
    assert_eq!(nus, vec![0.6, 0.8]);
    assert!(f(&doc, "/points/1/lambda/re") < 0.0);
}

#[test]
fn both_sweep_lists_are_rejected() {
    let out = run(&[
        "sweep",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps-list",
        "1e-2",
        "--nu-list",
        "0.5",
    ]);
    let err = error_json(&out, 2);
    assert!(s(&err, "/error").contains("eps-list"));
    assert!(s(&err, "/error").contains("nu-list"));
}

#[test]
fn malformed_grid_is_a_config_error() {
    let out = run(&[
        "field",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--grid",
        "64",
    ]);
    let err = error_json(&out, 2);
    assert!(s(&err, "/error").contains("grid"));

    let out = run(&[
        "field",
        "--profile",
        "kolmogorov",
        "--nu",
        "0.5",
        "--eps",
        "0.005",
        "--grid",
        "8x8",
    ]);
    let err = error_json(&out, 2);
    assert!(s(&err, "/error").contains("grid"));
}
