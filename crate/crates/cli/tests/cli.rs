//! End-to-end checks of the `kslab` binary: exit codes, schemas and files.

use std::path::Path;
use std::process::{Command, Output};

use kslab::field::{write_ksf, GridSpec, ScalarField};

fn kslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kslab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_RUN: &str = "\
# small subcritical run
n = 3
N = 12
L = 10
m = 1.25
epsilon = 1e-6
t_end = 0.05
init.kind = gaussian
init.sigma = 1
init.by = consistent_fraction
init.value = 0.5
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn constants_table_and_json() {
    let out = kslab(&["constants", "--n", "3", "--m", "1.25", "--mass", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line = stdout(&out)
        .lines()
        .find(|l| l.starts_with("threshold_norm"))
        .unwrap()
        .to_string();
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value / 1.08e3 - 1.0).abs() < 0.01);

    let out = kslab(&["constants", "--n", "3", "--m", "1.25", "--json"]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(
        keys,
        ["F_star", "hls_C_n", "m_critical", "m_fujita", "s_star", "sobolev_S_n", "threshold_norm"]
    );
}

#[test]
fn constants_outside_window_exit_two() {
    let out = kslab(&["constants", "--n", "3", "--m", "1.5"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("window (1.2, 1.333"), "{err}");
}

#[test]
fn classify_presets_and_exit_codes() {
    let out = kslab(&["classify", "--preset", "zero", "--m", "1.25"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["verdict"], "subcritical");
    assert_eq!(json.as_object().unwrap().len(), 5);

    let out = kslab(&[
        "classify", "--preset", "blob", "--fraction", "2", "--m", "1.25", "--grid", "24",
    ]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["verdict"], "supercritical_norm");
}

#[test]
fn classify_corrupt_file_names_header_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rho.ksf");
    let g = GridSpec::new(3, 8, 4.0).unwrap();
    write_ksf(&ScalarField::constant(g, 0.1), &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    // first axis count sits after the magic and the dimension
    let at = bytes.len() - 8 * 512 - 8 - 12;
    bytes[at..at + 4].copy_from_slice(&3u32.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    let out = kslab(&["classify", "--init", path.to_str().unwrap(), "--m", "1.25"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad N"), "{}", stderr(&out));

    let out = kslab(&["classify", "--init", "/nonexistent/rho.ksf", "--m", "1.25"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", SMALL_RUN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = kslab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    let csv_a = std::fs::read(a.join("diagnostics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("diagnostics.csv")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with(
        "t,mass,F,F_eps,F1,F2,dissipation,norm_crit,norm_m,norm_inf,moser_p1,moser_p2,moser_p3,moser_p4,clipped_mass,dt\n"
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let other: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], other["config_hash"]);
    assert_eq!(manifest["outcome"], "completed");
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(a.join(f.as_str().unwrap()).exists(), "{f}");
    }
    assert!(a.join("rho_0.ksf").exists());
}

#[test]
fn simulate_zero_horizon_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", &SMALL_RUN.replace("t_end = 0.05", "t_end = 0"));
    let out = dir.path().join("o");
    let res = kslab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn simulate_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    for bad in [
        SMALL_RUN.replace("m = 1.25", "m = 1.5"),
        format!("{SMALL_RUN}typo = 3\n"),
        SMALL_RUN.replace("N = 12", "N = x"),
    ] {
        let cfg = write(dir.path(), "bad.cfg", &bad);
        let res = kslab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 2, "{}", stderr(&res));
    }
}

#[test]
fn simulate_blowup_flag_exit_five() {
    // the drift of this mass forces a step below the floor immediately
    let dir = tempfile::tempdir().unwrap();
    let text = "n = 3\nN = 12\nL = 10\nm = 1.25\nmass = 1\nt_end = 1\n\
                init.sigma = 0.4\ninit.by = scale\ninit.value = 1e14\n";
    let cfg = write(dir.path(), "blow.cfg", text);
    let out = dir.path().join("o");
    let res = kslab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 5, "{}", stderr(&res));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outcome"], "numerical_blowup_flag");
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn verify_semigroup_battery() {
    let out = kslab(&["verify-semigroup", "--grid", "16", "--length", "12", "--battery", "0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "p,q,t,which,lhs,rhs,ratio\n");

    let out = kslab(&["verify-semigroup", "--grid", "32", "--length", "20", "--battery", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = stdout(&out).lines().count() - 1;
    assert_eq!(rows, 2);

    let out = kslab(&["verify-semigroup", "--grid", "16", "--battery", "1", "--pairs", "2:4"]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out), "");
}

#[test]
fn sweep_transition_and_job_independence() {
    let dir = tempfile::tempdir().unwrap();
    let text = "n = 3\nN = 16\nL = 12\nm = 1.25\nmass = 1\nt_end = 0\n\
                init.sigma = 1\ninit.by = fraction\nsweep.scale = 3, 0.5, 0.9\n";
    let cfg = write(dir.path(), "sweep.cfg", text);
    let one = dir.path().join("j1");
    let four = dir.path().join("j4");
    for (out, jobs) in [(&one, "1"), (&four, "4")] {
        let res = kslab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    let agg = std::fs::read_to_string(one.join("aggregate.csv")).unwrap();
    assert_eq!(agg, std::fs::read_to_string(four.join("aggregate.csv")).unwrap());
    let verdicts: Vec<&str> = agg.lines().skip(1).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(verdicts, ["subcritical", "subcritical", "supercritical_norm"]);
}

#[test]
fn single_point_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", SMALL_RUN);
    let sim = dir.path().join("sim");
    let res = kslab(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let sw = dir.path().join("sweep");
    let res = kslab(&["sweep", "--config", &cfg, "--out", sw.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let run = sw.join("run_000");
    for f in ["diagnostics.csv", "config.txt", "verdict.json", "summary.json"] {
        assert_eq!(std::fs::read(sim.join(f)).unwrap(), std::fs::read(run.join(f)).unwrap(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(sw.join("aggregate.csv")).unwrap().lines().count(), 2);
}

#[test]
fn invalid_thread_cap_exit_two() {
    let out = Command::new(env!("CARGO_BIN_EXE_kslab"))
        .args(["constants", "--n", "3", "--m", "1.25"])
        .env("KS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
