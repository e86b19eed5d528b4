//! Artifact writers. Floats use Rust's shortest round-trip formatting so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use volterra_impulse::{PiecewiseTrajectory, TimeMesh, Vector};

pub fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn to_vecs(vs: &[Vector]) -> Vec<Vec<f64>> {
    vs.iter().map(to_vec).collect()
}

fn side(mesh: &TimeMesh, p: usize) -> &'static str {
    let k = mesh.interval_of(p);
    if mesh.is_start(p) && k > 0 {
        "right"
    } else if mesh.is_last(p) && k + 1 < mesh.n_intervals() {
        "left"
    } else {
        "interior"
    }
}

/// Columns `interval_index, t, side, x_1..x_n`; intervals are numbered from 1.
pub fn trajectory_csv(x: &PiecewiseTrajectory, mesh: &TimeMesh) -> String {
    let mut out = String::from("interval_index,t,side");
    for c in 1..=x.dim {
        let _ = write!(out, ",x_{c}");
    }
    out.push('\n');
    for (p, v) in x.values.iter().enumerate() {
        let _ = write!(out, "{},{},{}", mesh.interval_of(p) + 1, mesh.node_time(p), side(mesh, p));
        for c in v.iter() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    let text = pretty(value)?;
    write_text(dir, name, &text)?;
    Ok(text)
}

/// One named pass/fail check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value <= threshold }
    }
}

pub fn failures(checks: &[Check]) -> Vec<String> {
    checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
}
