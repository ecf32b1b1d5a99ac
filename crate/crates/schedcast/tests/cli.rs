//! End-to-end checks of the command-line interface: round-trips,
//! diagnostics, exit codes, and determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_schedcast"))
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!(
            "schedcast-cli-{tag}-{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self) -> &Path {
        &self.0
    }

    fn join(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn write_params(dir: &TempDir) -> PathBuf {
    let path = dir.join("params.json");
    std::fs::write(
        &path,
        r#"{"law":"mpl","params":{"l0":2.52,"a":0.66,"b":614.30,"c":0.16,"alpha":0.42,"beta":0.88,"gamma":0.56}}"#,
    )
    .unwrap();
    path
}

#[test]
fn gen_schedule_round_trips_through_its_own_output() {
    let dir = TempDir::new("roundtrip");
    let status = bin()
        .args([
            "gen-schedule",
            "--kind",
            "wsd",
            "--total-steps",
            "2000",
            "--stable-steps",
            "1600",
            "--end-lr",
            "3e-5",
            "--out-file",
            "a.json",
            "--lr-table",
            "a_lrs.csv",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    // Feed the emitted record back through --config.
    let status = bin()
        .args(["gen-schedule", "--out-file", "b.json", "--lr-table", "b_lrs.csv"])
        .arg("--config")
        .arg(dir.join("a.json"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let a = std::fs::read_to_string(dir.join("a_lrs.csv")).unwrap();
    let b = std::fs::read_to_string(dir.join("b_lrs.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn predict_then_eval_on_itself_is_perfect() {
    let dir = TempDir::new("predict");
    let params = write_params(&dir);
    assert!(bin()
        .args([
            "gen-schedule",
            "--kind",
            "cosine",
            "--total-steps",
            "2400",
            "--out-file",
            "cosine.json",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .arg("predict")
        .arg("--params")
        .arg(&params)
        .arg("--schedule")
        .arg(dir.join("cosine.json"))
        .args(["--every", "100", "--out-file", "curve.csv"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    let output = bin()
        .arg("eval")
        .arg("--pred")
        .arg(dir.join("curve.csv"))
        .arg("--gt")
        .arg(dir.join("curve.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("R2=1.000000"), "{text}");
    assert!(text.contains("WorstE=0.000000"), "{text}");
    // The emitted curve re-ingests exactly.
    let curve = schedcast::curvefile::read_curve(&dir.join("curve.csv")).unwrap();
    assert_eq!(curve.steps.len(), 24);
}

#[test]
fn bad_curve_rows_fail_with_row_diagnostics() {
    let dir = TempDir::new("badrows");
    let curve = dir.join("bad.csv");
    std::fs::write(&curve, "step,lr,loss\n50,3e-4,2.5\n100,3e-4,-1.2\n").unwrap();
    let output = bin()
        .args(["fit", "--curves"])
        .arg(&curve)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("non-positive loss"), "{err}");
    assert!(err.contains("row 3"), "{err}");

    std::fs::write(&curve, "step,lr,loss\n100,3e-4,2.5\n100,3e-4,2.4\n").unwrap();
    let output = bin()
        .args(["fit", "--curves"])
        .arg(&curve)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("duplicate step"), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new("badcfg");
    let curve = dir.join("c.csv");
    std::fs::write(&curve, "step,lr,loss\n50,3e-4,2.5\n100,3e-4,2.4\n").unwrap();
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, r#"{"steps_per_phase": 10, "phasez": 1}"#).unwrap();
    let output = bin()
        .args(["fit", "--curves"])
        .arg(&curve)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("phasez"), "{err}");
}

#[test]
fn eval_rejects_mismatched_grids() {
    let dir = TempDir::new("mismatch");
    std::fs::write(dir.join("a.csv"), "step,lr,loss\n100,3e-4,2.5\n").unwrap();
    std::fs::write(dir.join("b.csv"), "step,lr,loss\n200,3e-4,2.5\n").unwrap();
    let output = bin()
        .arg("eval")
        .arg("--pred")
        .arg(dir.join("a.csv"))
        .arg("--gt")
        .arg(dir.join("b.csv"))
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn fit_is_deterministic_given_seed() {
    let dir = TempDir::new("determinism");
    let params = write_params(&dir);
    assert!(bin()
        .args([
            "gen-schedule",
            "--kind",
            "two-stage",
            "--stage-a-steps",
            "400",
            "--stage-b-steps",
            "400",
            "--stage-b-lr",
            "9e-5",
            "--warmup-steps",
            "216",
            "--out-file",
            "ts.json",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .arg("predict")
        .arg("--params")
        .arg(&params)
        .arg("--schedule")
        .arg(dir.join("ts.json"))
        .args(["--every", "20", "--out-file", "curve.csv"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    let run = |out_file: &str| {
        assert!(bin()
            .args(["fit", "--curves"])
            .arg(dir.join("curve.csv"))
            .args([
                "--warmup-steps",
                "216",
                "--steps-per-phase",
                "150",
                "--phases",
                "1",
                "--seed",
                "9",
                "--out-file",
                out_file,
            ])
            .arg("--out")
            .arg(dir.path())
            .status()
            .unwrap()
            .success());
        std::fs::read_to_string(dir.join(out_file)).unwrap()
    };
    let first = run("r1.json");
    let second = run("r2.json");
    assert_eq!(first, second);
}

#[test]
fn compare_g_emits_reingestible_table() {
    let dir = TempDir::new("compareg");
    let output = bin()
        .args(["compare-g", "--out-file", "g.csv"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let table = std::fs::read_to_string(dir.join("g.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("x,g_hat,g_power,abs_diff"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn simulate_is_deterministic_and_reports_bound() {
    let dir = TempDir::new("simulate");
    std::fs::write(
        dir.join("spec.json"),
        r#"{"d": 8, "nu": 0.3, "lambda_cap": 1.0, "rho": 0.2, "r": 2.0, "kappa": 0.5, "init_scale": 1.0, "eta0": 0.2}"#,
    )
    .unwrap();
    assert!(bin()
        .args([
            "gen-schedule",
            "--kind",
            "cosine",
            "--total-steps",
            "64",
            "--warmup-steps",
            "0",
            "--peak-lr",
            "0.2",
            "--out-file",
            "s.json",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap()
        .success());
    let run = || {
        let output = bin()
            .arg("simulate")
            .arg("--spec")
            .arg(dir.join("spec.json"))
            .arg("--schedule")
            .arg(dir.join("s.json"))
            .args(["--trials", "200", "--sim-seed", "5"])
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(output.status.success());
        std::fs::read_to_string(dir.join("mc.csv")).unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
    let report = std::fs::read_to_string(dir.join("m_estimate.json")).unwrap();
    assert!(report.contains("\"within_bound\": true"), "{report}");
}

#[test]
fn unknown_subcommand_fails() {
    let output = bin().arg("frobnicate").output().unwrap();
    assert!(!output.status.success());
}
