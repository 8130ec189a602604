use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BUILTIN: &str = r#"{"builtin": "cosh_example"}"#;
const OFFDIAG: &str =
    r#"{"builtin": "cosh_example", "B": [["0", "0.05/cosh(x)^2"], ["0.05/cosh(x)^2", "0"]]}"#;
const PT: &str = r#"{"builtin": "cosh_example", "B": [["-0.1/cosh(x)^2", "0"], ["0", "0"]]}"#;
const DIAG_DIR: &str = r#"{"builtin": "cosh_example", "B": [["1/cosh(x)^2", "0"], ["0", "0"]]}"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn eigenlab(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_eigenlab"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn scenario(&self, cmd: &str, body: &str, out: &str, extra: &[&str]) -> Output {
        let cfg = self.file(&format!("{out}.json"), body);
        let out = self.out(out);
        let mut args = vec![
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        self.eigenlab(&args)
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_builtin_prints_bookkeeping() {
    let r = Run::new();
    let o = r.scenario("validate", BUILTIN, "v", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("a = (-1, 1)"));
    assert!(text.contains("m = 1"));
    assert!(text.contains("mu_min = 1"));
    assert!(text.contains("continuous spectrum = [-1, inf)"));
    assert!(text.contains("codimension 2m = 2"));
    let v = json(&r.out("v").join("validate.json"));
    assert_eq!(v["m"], 1);
    assert_eq!(v["codim"], 2);
    assert_eq!(v["mu_min"].as_f64(), Some(1.0));
    assert_eq!(v["spectrum_edge"].as_f64(), Some(-1.0));
}

#[test]
fn window_over_threshold_is_exit_3_without_outputs() {
    let r = Run::new();
    let o = r.scenario(
        "validate",
        r#"{"builtin": "cosh_example", "lambda_window": [0.5, 1.5]}"#,
        "w",
        &[],
    );
    assert_eq!(code(&o), 3);
    assert!(!r.out("w").exists());
}

#[test]
fn asymmetric_entry_is_exit_2_naming_the_entry() {
    let r = Run::new();
    let o = r.scenario(
        "validate",
        r#"{"n": 2, "A": [["1", "exp(-x^2)"], ["0", "-1"]], "A_inf": [[1, 0], [0, -1]],
            "beta": 2, "lambda_window": [-0.5, 0.5]}"#,
        "a",
        &[],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(0,1)"), "{}", stderr(&o));
    assert!(!r.out("a").exists());
}

#[test]
fn config_errors_are_exit_2() {
    let r = Run::new();
    assert_eq!(code(&r.eigenlab(&["validate"])), 2);
    assert_eq!(
        code(&r.eigenlab(&["detect", "--config", "missing.json"])),
        2
    );
    assert_eq!(code(&r.scenario("validate", "{not json", "bad", &[])), 2);
    assert_eq!(
        code(&r.scenario(
            "validate",
            r#"{"builtin": "cosh_example", "B": [["x^"]]}"#,
            "e",
            &[]
        )),
        2
    );
}

#[test]
fn detect_builtin_finds_zero() {
    let r = Run::new();
    let o = r.scenario("detect", BUILTIN, "d", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let d = json(&r.out("d").join("detect.json"));
    assert_eq!(d["accepted"], true);
    assert!(d["lambda"].as_f64().unwrap().abs() < 1e-6);
    let csv = std::fs::read_to_string(r.out("d").join("eigenfunction.csv")).unwrap();
    assert!(csv.starts_with("x,u1,u2,du1,du2\n"));
    assert!(!r.out("d").join("curve.csv").exists());
}

#[test]
fn detect_offdiagonal_is_exit_1() {
    let r = Run::new();
    let o = r.scenario("detect", OFFDIAG, "d", &[]);
    assert_eq!(code(&o), 1);
    let d = json(&r.out("d").join("detect.json"));
    assert_eq!(d["accepted"], false);
    assert!(d["decay_rate"].is_null());
    assert!(!r.out("d").join("eigenfunction.csv").exists());
}

#[test]
fn detect_poschl_teller_shift() {
    let r = Run::new();
    let o = r.scenario("detect", PT, "d", &[]);
    assert_eq!(code(&o), 0);
    let s = (-1.0 + 9.4f64.sqrt()) / 2.0;
    let d = json(&r.out("d").join("detect.json"));
    assert!((d["lambda"].as_f64().unwrap() - (1.0 - s * s)).abs() < 1e-6);
}

#[test]
fn detect_is_byte_identical_across_runs_and_threads() {
    let r = Run::new();
    r.scenario("detect", BUILTIN, "one", &["--emit-curve"]);
    r.scenario(
        "detect",
        BUILTIN,
        "two",
        &["--emit-curve", "--threads", "3"],
    );
    for f in ["detect.json", "eigenfunction.csv", "curve.csv"] {
        let a = std::fs::read(r.out("one").join(f)).unwrap();
        let b = std::fs::read(r.out("two").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let curve = std::fs::read_to_string(r.out("one").join("curve.csv")).unwrap();
    assert!(curve.starts_with("lambda,sigma_min\n"));
    assert_eq!(curve.lines().count(), 65);
    let rec = json(&r.out("two").join("run.json"));
    assert_eq!(rec["command"], "detect");
    assert_eq!(rec["threads"], 3);
    assert_eq!(rec["scenario_sha256"].as_str().unwrap().len(), 64);
}

fn sweep_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("s,detected,lambda,prediction,sigma_min_at_prediction")
    );
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn sweep_diagonal_family_tracks_prediction() {
    let r = Run::new();
    let o = r.scenario(
        "sweep",
        DIAG_DIR,
        "s",
        &[
            "--param", "s", "--from", "-0.1", "--to", "0.1", "--steps", "5",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = sweep_rows(&r.out("s").join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    let mut prev = f64::NEG_INFINITY;
    for row in rows {
        let s: f64 = row[0].parse().unwrap();
        assert!(s > prev);
        prev = s;
        assert_eq!(row[1], "true");
        let lambda: f64 = row[2].parse().unwrap();
        let prediction: f64 = row[3].parse().unwrap();
        assert!((lambda - prediction).abs() <= 0.5 * s * s + 1e-9);
    }
}

#[test]
fn sweep_offdiagonal_family_is_destroyed_off_zero() {
    let r = Run::new();
    let o = r.scenario(
        "sweep",
        OFFDIAG,
        "s",
        &["--from", "-0.1", "--to", "0.1", "--steps", "3"],
    );
    assert_eq!(code(&o), 0);
    for row in sweep_rows(&r.out("s").join("sweep.csv")) {
        let s: f64 = row[0].parse().unwrap();
        assert_eq!(row[1], if s == 0.0 { "true" } else { "false" });
    }
}

#[test]
fn single_step_sweep_at_zero_reproduces_detect() {
    let r = Run::new();
    r.scenario(
        "sweep",
        DIAG_DIR,
        "s",
        &["--from", "0", "--to", "0", "--steps", "1"],
    );
    r.scenario("detect", BUILTIN, "d", &[]);
    let rows = sweep_rows(&r.out("s").join("sweep.csv"));
    let d = json(&r.out("d").join("detect.json"));
    assert_eq!(rows.len(), 1);
    assert_eq!(
        rows[0][2].parse::<f64>().unwrap(),
        d["lambda"].as_f64().unwrap()
    );
}

#[test]
fn sweep_without_direction_is_exit_2() {
    let r = Run::new();
    let o = r.scenario(
        "sweep",
        BUILTIN,
        "s",
        &["--from", "0", "--to", "1", "--steps", "3"],
    );
    assert_eq!(code(&o), 2);
    let o = r.scenario(
        "sweep",
        DIAG_DIR,
        "t",
        &["--param", "q", "--from", "0", "--to", "1", "--steps", "3"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn melnikov_default_family_has_full_rank() {
    let r = Run::new();
    let o = r.scenario("melnikov", BUILTIN, "m", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("codimension certificate: rank 2 of expected 2"));
    let m = json(&r.out("m").join("melnikov.json"));
    for key in [
        "m",
        "codim",
        "lambda_prime",
        "matrix",
        "rank",
        "tangent_basis",
    ] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert_eq!(m["rank"], 2);
    assert_eq!(m["matrix"].as_array().unwrap().len(), 2);
    assert_eq!(m["matrix"][0].as_array().unwrap().len(), 10);
    assert!(!r.out("m").join("tangent.json").exists());
}

#[test]
fn diagonal_only_family_is_not_rich() {
    let r = Run::new();
    let fam = r.file(
        "fam.json",
        r#"[[["1/cosh(x)^2", "0"], ["0", "0"]], [["exp(-x^2)", "0"], ["0", "0"]]]"#,
    );
    let o = r.scenario(
        "tangent",
        BUILTIN,
        "t",
        &["--family", fam.to_str().unwrap()],
    );
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("rank 0 of expected 2"));
    assert!(stderr(&o).contains("family not rich"));
    let t = json(&r.out("t").join("tangent.json"));
    assert_eq!(t["dimension"], 2);
    assert!(json(&r.out("t").join("run.json"))["family_sha256"].is_string());
}

#[test]
fn empty_family_is_rank_0() {
    let r = Run::new();
    let fam = r.file("fam.json", "[]");
    let o = r.scenario(
        "melnikov",
        BUILTIN,
        "m",
        &["--family", fam.to_str().unwrap()],
    );
    assert_eq!(code(&o), 1);
    assert_eq!(json(&r.out("m").join("melnikov.json"))["rank"], 0);
}
