//! CSV trace output.

use std::fmt::Write as _;
use std::path::Path;

use cmpc_core::dynamics::TrajectoryLog;
use cmpc_core::{Error, Result};

/// Column names: t, x1..xn, u, xd1..xdn, V, then the four flags.
pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.push("u".into());
    cols.extend((1..=n).map(|i| format!("xd{i}")));
    cols.extend(["V", "state_ok", "input_ok", "planner_feasible", "fallback_used"].map(String::from));
    cols.join(",")
}

/// Floats use Rust's shortest round-trip formatting; flags are 1/0.
pub fn csv_string(log: &TrajectoryLog) -> String {
    let n = log.rows.first().map_or(0, |r| r.x.len());
    let mut out = csv_header(n);
    out.push('\n');
    for r in &log.rows {
        write!(out, "{}", r.t).unwrap();
        for v in r.x.iter() {
            write!(out, ",{v}").unwrap();
        }
        write!(out, ",{}", r.u).unwrap();
        for v in r.reference.iter() {
            write!(out, ",{v}").unwrap();
        }
        let flag = |b: bool| u8::from(b);
        writeln!(
            out,
            ",{},{},{},{},{}",
            r.lyapunov,
            flag(r.state_ok),
            flag(r.input_ok),
            flag(r.planner_feasible),
            flag(r.fallback_used)
        )
        .unwrap();
    }
    out
}

pub fn write_csv(path: &Path, log: &TrajectoryLog) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Configuration(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, csv_string(log)).map_err(|e| Error::Configuration(format!("cannot write {}: {e}", path.display())))
}
