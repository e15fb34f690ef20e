use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const EXAMPLE3: &str = "[model]\npreset = \"damped\"\ndim = 20\nomega = 1.0\nA = 1.0\nnu = 0.5\n";

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn nsse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsse")).args(args).output().unwrap()
}

/// Runs `cmd` with `--out` and returns the exit code and parsed summary.
fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, Value) {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = nsse(&args);
    let code = o.status.code().unwrap();
    assert_ne!(code, 2, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    let summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    (code, summary)
}

fn series<'a>(summary: &'a Value, name: &str) -> &'a Value {
    summary["results"]["observables"].as_array().unwrap().iter().find(|s| s["name"] == name).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn eigenstate_without_channels_is_constant() {
    let dir = TempDir::new().unwrap();
    let body = "[model]\npreset = \"oscillator\"\ndim = 8\nbeta2 = 1.0\ninitial = [2]\n\
                [solver]\ndt = 0.01\n[ensemble]\nn_traj = 8\n[checks]\nobservables = [\"N\", \"pop2\", \"norm\"]\n";
    let cfg = write_config(&dir, "free.toml", body);
    let (code, s) = run("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0);
    for (name, value) in [("N", 2.0), ("pop2", 1.0), ("norm", 1.0)] {
        let obs = series(&s, name);
        assert!(floats(&obs["mean"]).iter().all(|v| (v - value).abs() < 1e-12), "{name}");
        assert!(floats(&obs["stderr"]).iter().all(|&e| e < 1e-12), "{name}");
    }
    assert!(s["results"]["max_norm_deviation"].as_f64().unwrap() < 1e-12);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let body = "[model]\npreset = \"damped\"\ndim = 12\nomega = 1.0\nA = 1.0\nnu = 0.5\n\
                [solver]\ndt = 1e-3\nrecord_stride = 10\n[ensemble]\nn_traj = 16\nseed = 11\nmethod = \"weighted\"\n";
    let cfg = write_config(&dir, "ex3.toml", body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("simulate", &cfg, &a, &["--traj-csv"]);
    run("simulate", &cfg, &b, &["--traj-csv"]);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 17);
    for name in names {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let csv = std::fs::read_to_string(a.join("traj_00003.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 2 * 12 + 2);
    assert_eq!((header[0], header[1], header[25], header[26]), ("t", "re0", "norm", "weight"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 101);
    let last: Vec<f64> = rows[100].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[25] - 1.0).abs() < 1e-12);
}

#[test]
fn stderr_shrinks_with_ensemble_size() {
    let dir = TempDir::new().unwrap();
    let stderr_at_end = |n: usize, tag: &str| {
        let body = format!("{EXAMPLE3}[solver]\ndt = 1e-3\nrecord_stride = 100\n[ensemble]\nn_traj = {n}\nseed = 3\n");
        let cfg = write_config(&dir, &format!("{tag}.toml"), &body);
        let (_, s) = run("simulate", &cfg, &dir.path().join(tag), &[]);
        *floats(&series(&s, "N")["stderr"]).last().unwrap()
    };
    let ratio = stderr_at_end(2000, "big") / stderr_at_end(1000, "small");
    assert!((ratio - 0.5f64.sqrt()).abs() <= 0.2 * 0.5f64.sqrt(), "ratio {ratio}");
}

#[test]
fn compare_without_channels_has_zero_distance() {
    let dir = TempDir::new().unwrap();
    let body = "[model]\npreset = \"oscillator\"\ndim = 8\nbeta2 = 1.0\ninitial = [1]\n\
                [solver]\ndt = 0.01\n[ensemble]\nn_traj = 16\n[checks]\ncheck_times = [0.5, 1.0]\n";
    let cfg = write_config(&dir, "free.toml", body);
    let (code, s) = run("compare", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0, "{:?}", s["failures"]);
    let distances = s["results"]["distances"].as_array().unwrap();
    assert_eq!(distances.len(), 4);
    assert!(distances.iter().all(|d| d["trace_distance"].as_f64().unwrap() < 1e-12));
}

#[test]
fn compare_passes_on_damped_oscillator() {
    let dir = TempDir::new().unwrap();
    let body = format!("{EXAMPLE3}[solver]\ndt = 1e-3\n[ensemble]\nn_traj = 400\nseed = 5\n[checks]\ncheck_times = [0.5, 1.0]\n");
    let cfg = write_config(&dir, "ex3.toml", &body);
    let (code, s) = run("compare", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0, "{:?}", s["failures"]);
    assert_eq!(s["failures"].as_array().unwrap().len(), 0);
    assert!(s["checks"].as_array().unwrap().len() > 10);
}

#[test]
fn coarse_step_is_flagged() {
    let dir = TempDir::new().unwrap();
    let body = format!("{EXAMPLE3}[solver]\ndt = 0.1\n[ensemble]\nn_traj = 100\n");
    let cfg = write_config(&dir, "coarse.toml", &body);
    let out = dir.path().join("out");
    let o = nsse(&["compare", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("check failed: step_scale"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(s["failures"].as_array().unwrap().iter().any(|f| f == "step_scale"));
}

#[test]
fn criteria_exit_status_only_with_enforce() {
    let dir = TempDir::new().unwrap();
    let passing = write_config(&dir, "ok.toml", "[model]\npreset = \"two_photon\"\ndim = 40\nalpha4 = 1.0\nalpha5 = 0.5\n");
    let failing = write_config(&dir, "bad.toml", "[model]\npreset = \"two_photon\"\ndim = 40\nalpha4 = 0.5\nalpha5 = 1.0\n");
    let (code, s) = run("criteria", &passing, &dir.path().join("a"), &["--enforce"]);
    assert_eq!(code, 0);
    assert_eq!((s["results"]["theorem7"].as_bool(), s["results"]["theorem8"].as_bool()), (Some(true), Some(true)));
    assert_eq!(s["results"]["leading_coefficient"].as_f64(), Some(-12.0));
    assert!(s["results"]["h13"]["alpha"].as_f64().unwrap().is_finite());
    assert_eq!(s["results"]["table"].as_array().unwrap().len(), 38);
    let (code, s) = run("criteria", &failing, &dir.path().join("b"), &[]);
    assert_eq!(code, 0);
    assert_eq!(s["results"]["theorem8"].as_bool(), Some(false));
    assert!(s["results"]["h13_error"].as_str().unwrap().contains("unbounded"));
    let (code, s) = run("criteria", &failing, &dir.path().join("c"), &["--enforce"]);
    assert_eq!(code, 1);
    assert_eq!(s["failures"], serde_json::json!(["theorem7", "theorem8"]));
}

#[test]
fn criteria_rejects_low_power() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "p3.toml", "[model]\npreset = \"two_photon\"\ndim = 20\nalpha4 = 1.0\n[checks]\np = 3\n");
    let o = nsse(&["criteria", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn degenerate_kernel_is_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tp.toml", "[model]\npreset = \"two_photon\"\ndim = 10\nalpha4 = 1.0\n");
    let (code, s) = run("steady", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 1);
    assert_eq!(s["results"]["kernel_dimension"].as_u64(), Some(4));
    assert_eq!(s["failures"], serde_json::json!(["unique_steady_state"]));
}

#[test]
fn steady_matches_thermal_state() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{EXAMPLE3}[solver]\ndt = 2e-3\nt_final = 50\nrecord_stride = 5\n[ensemble]\nn_traj = 16\nseed = 9\n\
         [checks]\nburn_in = 10\nobservables = [\"N\", \"pop0\"]\n"
    );
    let cfg = write_config(&dir, "steady.toml", &body);
    let (code, s) = run("steady", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 0, "{:?}", s["failures"]);
    let rows = s["results"]["rows"].as_array().unwrap();
    assert!((rows[0]["stationary"].as_f64().unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn summary_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let body = format!("{EXAMPLE3}[ensemble]\nn_traj = 8\nseed = 21\n[solver]\nrecord_stride = 500\n");
    let cfg = write_config(&dir, "short.toml", &body);
    let (_, first) = run("simulate", &cfg, &dir.path().join("a"), &[]);
    let expanded = toml::to_string(&first["config"]).unwrap();
    let dt = first["config"]["solver"]["dt"].as_f64().unwrap();
    assert!(dt > 0.0 && dt <= 1e-3);
    let again = write_config(&dir, "resolved.toml", &expanded);
    let (_, second) = run("simulate", &again, &dir.path().join("b"), &[]);
    assert_eq!(first, second);
}

#[test]
fn config_errors_exit_two_with_line_numbers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", "[model]\npreset = \"damped\"\ndim = 12\nomega = 1.0\nA = 1.0\nnu = 0.5\ntemperature = 3\n");
    let o = nsse(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 7") && err.contains("temperature"), "{err}");
    let ok = write_config(&dir, "ok.toml", EXAMPLE3);
    let o = nsse(&["simulate", "--config", ok.to_str().unwrap(), "--traj-csv"]);
    assert_eq!(o.status.code(), Some(2));
}
