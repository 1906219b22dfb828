use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leeyang"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn csv_column(text: &str, col: usize) -> Vec<f64> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

fn assert_schema(name: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

fn json_out(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    serde_json::from_str(&stdout(&all)).unwrap()
}

#[test]
fn zeros_of_the_smallest_rooted_tree() {
    let text = stdout(&["zeros", "--k", "2", "--n", "1", "--t", "0.5", "--tree", "rooted"]);
    assert_eq!(text.lines().next(), Some("index,angle_radians,residual"));
    let a = csv_column(&text, 1);
    assert_eq!(a.len(), 3);
    assert!((a[0] + 1.696124157962962).abs() < 1e-12);
    assert!((a[1] - 1.696124157962962).abs() < 1e-12);
    assert!((a[2] - PI).abs() < 1e-15);
    assert_eq!(text, stdout(&["zeros", "--n", "1", "--t", "1/2"]));
}

#[test]
fn phi_e_curve_is_monotone() {
    let text = stdout(&["phi-e", "--k", "2", "--t-grid", "0.34:0.99:0.01"]);
    assert_eq!(text.lines().next(), Some("t,phi_e,has_gap"));
    let p = csv_column(&text, 1);
    assert_eq!(p.len(), 66);
    assert!(p[0] < 0.01);
    assert!(p.windows(2).all(|w| w[1] > w[0]));
    assert!(*p.last().unwrap() > 2.7);
    let end = stdout(&["phi-e", "--t-grid", "1:1:0.1"]);
    assert!((csv_column(&end, 1)[0] - PI).abs() < 1e-15);
}

#[test]
fn quick_verify_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run(&["verify", "--quick", "--seed", "9", "--format", "json", "--output", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let doc: Value = serde_json::from_slice(&ta).unwrap();
    assert_schema("verify", &doc);
    assert_eq!(doc["result"]["passed"], Value::Bool(true));
}

#[test]
fn invalid_configurations_exit_with_one() {
    assert_eq!(code(&["zeros", "--n", "2", "--t", "1.5"]), 1);
    assert_eq!(code(&["zeros", "--n", "2", "--t", "a/b"]), 1);
    assert_eq!(code(&["zeros", "--n", "2", "--t", "0.5", "--tree", "binary"]), 1);
    assert_eq!(code(&["zeros", "--k", "1", "--n", "2", "--t", "0.5"]), 1);
    assert_eq!(code(&["zeros", "--n", "2", "--t", "0.5", "--tree", "full", "--n", "0"]), 1);
    assert_eq!(code(&["zeros", "--n", "40", "--t", "0.5"]), 1);
    assert_eq!(code(&["zeros", "--n", "2", "--t", "0.5", "--workers", "0"]), 1);
    assert_eq!(code(&["zeros", "--n", "2", "--t", "0.5", "--bogus"]), 1);
    assert_eq!(code(&["phi-e", "--t-grid", "0.5:0.4:0.1"]), 1);
    assert_eq!(code(&["phi-e", "--t-grid", "0.5:1.5:0.1"]), 1);
    assert_eq!(code(&["spectra", "--t", "0.5", "--phi", "0.1", "--format", "json"]), 1);
    assert_eq!(code(&["spectra", "--t", "0.5", "--format", "json"]), 1);
    assert_eq!(code(&["free-energy", "--n", "4", "--t", "0.5", "--r-grid", "0.5:1.5:0.5"]), 1);
}

#[test]
fn evaluation_at_a_zero_is_a_computation_failure() {
    let args = ["free-energy", "--n", "1", "--t", "0.5", "--mode", "point", "--r", "1", "--phi", "3.141592653589793"];
    assert_eq!(code(&args), 2);
}

#[test]
fn json_outputs_match_their_schemas() {
    assert_schema("zeros", &json_out(&["zeros", "--n", "3", "--t", "1/5", "--tree", "full"]));
    assert_schema("measure", &json_out(&["measure", "--n", "8", "--t", "0.2", "--points", "50"]));
    assert_schema(
        "measure",
        &json_out(&["measure", "--n", "8", "--t", "0.2", "--kind", "histogram", "--points", "16"]),
    );
    assert_schema("phi-e", &json_out(&["phi-e", "--t-grid", "0.1:0.9:0.1"]));
    assert_schema(
        "spectra",
        &json_out(&[
            "spectra",
            "--t",
            "0.2",
            "--phi",
            "1",
            "--birkhoff-steps",
            "20000",
            "--birkhoff-seeds",
            "4",
            "--mme-depth",
            "10",
            "--dimension-level",
            "14",
        ]),
    );
    assert_schema("free-energy", &json_out(&["free-energy", "--n", "6", "--t", "0.3", "--r-grid", "1.1:1.3:0.1"]));
    assert_schema(
        "free-energy",
        &json_out(&["free-energy", "--n", "6", "--t", "0.3", "--mode", "point", "--phi", "0.5"]),
    );
    assert_schema(
        "free-energy",
        &json_out(&["free-energy", "--n", "16", "--t", "0.2", "--mode", "singular", "--kappa-prior", "2.4"]),
    );
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = [
        "spectra",
        "--t",
        "0.3",
        "--phi=-2",
        "--seed",
        "5",
        "--birkhoff-steps",
        "20000",
        "--birkhoff-seeds",
        "4",
        "--mme-depth",
        "8",
        "--dimension-level",
        "0",
        "--format",
        "json",
    ];
    let a = stdout(&args);
    assert_eq!(a, stdout(&args));
    let mut sequential = args.to_vec();
    sequential.extend(["--workers", "1"]);
    assert_eq!(a, stdout(&sequential));
    let mut other = args.to_vec();
    other[5] = "6";
    assert_ne!(a, stdout(&other));
}

#[test]
fn csv_headers() {
    let head = |args: &[&str]| stdout(args).lines().next().unwrap().to_string();
    assert_eq!(head(&["measure", "--n", "6", "--t", "0.2"]), "phi,M");
    assert_eq!(head(&["measure", "--n", "6", "--t", "0.2", "--kind", "histogram"]), "bin_center,mass");
    assert_eq!(head(&["spectra", "--t", "0.2", "--phi-grid=-3:3:1"]), "phi,w_disk_re,w_disk_im,chi,kappa,status");
    assert_eq!(head(&["free-energy", "--n", "6", "--t", "0.2"]), "r,free_energy");
    assert_eq!(
        head(&["free-energy", "--n", "16", "--t", "0.2", "--mode", "singular", "--kappa-prior", "2.4"]),
        "y,h_sing,fit"
    );
    assert_eq!(
        head(&["free-energy", "--n", "6", "--t", "0.2", "--mode", "point"]),
        "z_re,z_im,f_electrostatic,f_recursive,m_re,m_im"
    );
    assert_eq!(head(&["verify", "--quick"]), "name,passed,value,threshold");
}

#[test]
fn writes_to_the_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cdf.csv");
    let out = run(&["measure", "--n", "5", "--t", "0.4", "--points", "10", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().last().unwrap().ends_with(",1.0000000000000000e0"));
}
