//! File formats: trajectory CSV, JSON documents and run manifests.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::solver::{SolverConfig, Trajectory};

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub problem: String,
    pub config: SolverConfig,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per path, in path order.
    pub path_runtimes: Vec<f64>,
    pub runtime_seconds: f64,
}

/// Float format with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(q: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=q).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.push("h_dist".into());
    cols.push("b".into());
    cols.join(",")
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let q = traj.x.first().map_or(0, |x| x.len());
    let m = traj.u.first().map_or(0, |u| u.len());
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", trajectory_header(q, m))?;
    for i in 0..traj.len() {
        let mut row = vec![fmt_f64(traj.times[i])];
        row.extend(traj.x[i].iter().map(|&v| fmt_f64(v)));
        row.extend(traj.u[i].iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(traj.h_dist[i]));
        row.push(fmt_f64(traj.b_history[i]));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn write_rows_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(","))?;
    }
    w.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}
