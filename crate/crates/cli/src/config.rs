//! Problem configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Result};
use serde::Deserialize;
use volterra_impulse::catalog::{self, BuiltIn};
use volterra_impulse::ode::OdeProblemSpec;
use volterra_impulse::{build_mesh, ControlBox, ControlPolicy, ProblemSpec, TimeMesh, Vector};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Every field except `problem` falls back to the built-in's defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub tau: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub points_per_interval: Option<usize>,
    pub policy: Option<Vec<Vec<f64>>>,
    pub control_box: Option<BoxConfig>,
}

/// Input errors map to exit code 2.
#[derive(Debug)]
pub struct InputError {
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for InputError {}

fn input_error(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
    InputError { kind, message: message.into() }.into()
}

pub struct Resolved {
    pub name: String,
    pub problem: ProblemSpec,
    pub ode: Option<OdeProblemSpec>,
    pub mesh: TimeMesh,
    pub policy: ControlPolicy,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| input_error("malformed_config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| input_error("malformed_config", format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, ppi_override: Option<usize>) -> Result<Resolved> {
        let built: BuiltIn = catalog::builtin(&self.problem, &self.params).map_err(|e| match e {
            volterra_impulse::Error::UnknownProblem(_) => input_error(
                "unknown_problem",
                format!("unknown problem `{}` (known: {})", self.problem, catalog::NAMES.join(", ")),
            ),
            other => input_error("invalid_parameter", other.to_string()),
        })?;
        let d = &built.defaults;
        let tau = self.tau.clone().unwrap_or_else(|| d.tau.clone());
        let horizon = self.horizon.unwrap_or(d.horizon);
        let ppi = ppi_override.or(self.points_per_interval).unwrap_or(d.points_per_interval);
        let mesh = build_mesh(&tau, horizon, ppi).map_err(|e| input_error("invalid_mesh", e.to_string()))?;
        let bounds = match &self.control_box {
            Some(b) => {
                ControlBox::new(b.lo.clone(), b.hi.clone()).map_err(|e| input_error("invalid_box", e.to_string()))?
            }
            None => d.bounds.clone(),
        };
        if bounds.dim() != built.problem.m {
            bail!(input_error(
                "invalid_box",
                format!("control box has dimension {}, problem has m = {}", bounds.dim(), built.problem.m)
            ));
        }
        let values = match &self.policy {
            Some(p) => p.clone(),
            // a default policy of the wrong length is replaced by its first value
            None if d.policy.len() == mesh.n_intervals() => d.policy.clone(),
            None => vec![d.policy[0].clone(); mesh.n_intervals()],
        };
        let policy = ControlPolicy::new(values.into_iter().map(Vector::from_vec).collect(), bounds)
            .and_then(|p| p.check_mesh(&mesh).map(|_| p))
            .map_err(|e| input_error("invalid_policy", e.to_string()))?;
        Ok(Resolved { name: self.problem.clone(), problem: built.problem, ode: built.ode, mesh, policy })
    }
}

pub fn input_kind(err: &anyhow::Error) -> Option<&'static str> {
    err.downcast_ref::<InputError>().map(|e| e.kind)
}
