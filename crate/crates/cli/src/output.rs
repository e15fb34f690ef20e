//! Result emission. All floats go through `serde_json` (shortest
//! round-trip form) or `{:.16e}` (17 significant digits), so reruns with the
//! same seed are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nsse::Traj;

use crate::run::Summary;
use crate::CliError;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Pretty JSON, newline-terminated.
pub fn to_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Summary JSON to `out/summary.json` plus a check table on stdout, or the
/// JSON itself on stdout.
pub fn emit(summary: &Summary, out: Option<&Path>) -> Result<(), CliError> {
    let json = to_json(summary);
    match out {
        None => print!("{json}"),
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io(dir))?;
            let path = dir.join("summary.json");
            fs::write(&path, json).map_err(io(&path))?;
            print!("{}", check_table(summary));
        }
    }
    Ok(())
}

fn check_table(summary: &Summary) -> String {
    let mut s = String::new();
    let width = summary.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let _ = writeln!(s, "{}: {} checks, {} failed", summary.command, summary.checks.len(), summary.failures.len());
    for c in &summary.checks {
        let _ = writeln!(s, "{} {:width$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    s
}

/// CSV rows `t, re_0, im_0, ..., re_{d-1}, im_{d-1}, norm, weight`.
pub fn trajectory_csv(tr: &Traj) -> String {
    let dim = tr.states()[0].dim();
    let mut s = String::from("t");
    for j in 0..dim {
        let _ = write!(s, ",re{j},im{j}");
    }
    s.push_str(",norm,weight\n");
    for (t, x) in tr.times().iter().zip(tr.states()) {
        let _ = write!(s, "{t:.16e}");
        for z in x.coeffs() {
            let _ = write!(s, ",{:.16e},{:.16e}", z.re, z.im);
        }
        let _ = writeln!(s, ",{:.16e},{:.16e}", x.norm(), tr.weight());
    }
    s
}

pub fn write_trajectories(dir: &Path, ensemble: &[Traj]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (i, tr) in ensemble.iter().enumerate() {
        let path = dir.join(format!("traj_{i:05}.csv"));
        fs::write(&path, trajectory_csv(tr)).map_err(io(&path))?;
    }
    Ok(())
}
