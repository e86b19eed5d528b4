#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use volterra_impulse::catalog::{self, BuiltIn};
use volterra_impulse::ode::OdeProblemSpec;
use volterra_impulse::*;

pub fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

pub fn m1(x: f64) -> Matrix {
    Matrix::from_element(1, 1, x)
}

pub fn load(name: &str) -> BuiltIn {
    catalog::builtin(name, &BTreeMap::new()).unwrap()
}

pub fn load_with(name: &str, params: &[(&str, f64)]) -> BuiltIn {
    let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    catalog::builtin(name, &params).unwrap()
}

pub fn default_policy(b: &BuiltIn) -> ControlPolicy {
    let values = b.defaults.policy.iter().map(|v| Vector::from_vec(v.clone())).collect();
    ControlPolicy::new(values, b.defaults.bounds.clone()).unwrap()
}

pub fn mesh_for(b: &BuiltIn, ppi: usize) -> TimeMesh {
    build_mesh(&b.defaults.tau, b.defaults.horizon, ppi).unwrap()
}

pub fn scalar_policy(values: &[f64]) -> ControlPolicy {
    ControlPolicy::new(values.iter().map(|&a| v1(a)).collect(), ControlBox::uniform(1, -10.0, 10.0)).unwrap()
}

/// Scalar impulsive ODE with zero switching cost and zero control sensitivity
/// unless overridden.
pub struct ScalarOde {
    pub f_x: f64,
    pub jump_x: f64,
    pub jump_const: f64,
    pub running_x: f64,
    pub terminal_x: f64,
    pub x0: f64,
}

impl ScalarOde {
    pub fn build(&self) -> OdeProblemSpec {
        let (a, gx, g0, cx, tx) = (self.f_x, self.jump_x, self.jump_const, self.running_x, self.terminal_x);
        OdeProblemSpec {
            name: "scalar".into(),
            n: 1,
            m: 1,
            x0: v1(self.x0),
            f: Arc::new(move |_, x, _| v1(a * x[0])),
            f_x: Arc::new(move |_, _, _| m1(a)),
            f_u: Arc::new(|_, _, _| m1(0.0)),
            jump: Arc::new(move |_, x, _, _| v1(gx * x[0] + g0)),
            jump_x: Arc::new(move |_, _, _, _| m1(gx)),
            jump_a: Arc::new(|_, _, _, _| m1(0.0)),
            jump_b: Arc::new(|_, _, _, _| m1(0.0)),
            running: Arc::new(move |_, x, _| cx * x[0]),
            running_x: Arc::new(move |_, _, _| v1(cx)),
            running_u: Arc::new(|_, _, _| v1(0.0)),
            switching: Arc::new(|_, _, _| 0.0),
            switching_x: Arc::new(|_, _, _| v1(0.0)),
            switching_a: Arc::new(|_, _, _| v1(0.0)),
            switching_b: Arc::new(|_, _, _| v1(0.0)),
            terminal: Arc::new(move |x| tx * x[0]),
            terminal_x: Arc::new(move |_| v1(tx)),
            lipschitz_f: a.abs(),
            lipschitz_g: gx.abs(),
        }
    }
}
