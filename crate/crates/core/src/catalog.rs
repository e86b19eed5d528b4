//! Named built-in problems with numeric parameters.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{ControlBox, Matrix, ProblemSpec, Vector};
use crate::ode::{lift_ode, OdeProblemSpec};

pub const NAMES: [&str; 6] =
    ["null", "pure-jump", "exp-kernel", "controlled-linear", "lq-impulsive-ode", "memory-decay"];

pub type Params = BTreeMap<String, f64>;

/// Mesh and policy used when a config leaves them out.
#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub tau: Vec<f64>,
    pub horizon: f64,
    pub points_per_interval: usize,
    pub policy: Vec<Vec<f64>>,
    pub bounds: ControlBox,
}

#[derive(Debug)]
pub struct BuiltIn {
    pub problem: ProblemSpec,
    /// Present for problems defined as impulsive ODEs.
    pub ode: Option<OdeProblemSpec>,
    pub defaults: Defaults,
}

struct Reader<'a> {
    params: &'a Params,
    allowed: &'static [&'static str],
}

impl Reader<'_> {
    fn get(&self, key: &str, default: f64) -> f64 {
        debug_assert!(self.allowed.contains(&key));
        self.params.get(key).copied().unwrap_or(default)
    }

    fn check(&self) -> Result<()> {
        for (key, value) in self.params {
            if !self.allowed.contains(&key.as_str()) {
                return Err(Error::InvalidParameter(format!("`{key}` (accepted: {})", self.allowed.join(", "))));
            }
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!("`{key}` is not finite")));
            }
        }
        Ok(())
    }
}

fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn m1(x: f64) -> Matrix {
    Matrix::from_element(1, 1, x)
}

fn scalar_defaults(tau: Vec<f64>, ppi: usize, policy: Vec<f64>) -> Defaults {
    Defaults {
        tau,
        horizon: 1.0,
        points_per_interval: ppi,
        policy: policy.into_iter().map(|a| vec![a]).collect(),
        bounds: ControlBox::uniform(1, -1.0, 1.0),
    }
}

pub fn builtin(name: &str, params: &Params) -> Result<BuiltIn> {
    match name {
        "null" => null(params),
        "pure-jump" => pure_jump(params),
        "exp-kernel" => exp_kernel(params),
        "controlled-linear" => controlled_linear(params),
        "lq-impulsive-ode" => lq_impulsive_ode(params),
        "memory-decay" => memory_decay(params),
        other => Err(Error::UnknownProblem(other.into())),
    }
}

/// `f = G = g = φ = 0`, `h(s) = h0 + h1 s + h2 s²`.
fn null(params: &Params) -> Result<BuiltIn> {
    let r = Reader { params, allowed: &["h0", "h1", "h2"] };
    r.check()?;
    let (h0, h1, h2) = (r.get("h0", 0.0), r.get("h1", 0.0), r.get("h2", 1.0));
    Ok(BuiltIn {
        problem: ProblemSpec::new("null", 1, 1, Box::new(move |s| v1(h0 + h1 * s + h2 * s * s))),
        ode: None,
        defaults: scalar_defaults(vec![0.5], 11, vec![0.0, 0.0]),
    })
}

/// `f ≡ 0`, `G = c x + d b`, `h ≡ h0`, `φ = x(τ_k⁻)` with `k = cost_index` (0 selects `N+1`).
fn pure_jump(params: &Params) -> Result<BuiltIn> {
    let r = Reader { params, allowed: &["c", "d", "h0", "cost_index"] };
    r.check()?;
    let (c, d, h0) = (r.get("c", 1.0), r.get("d", 0.0), r.get("h0", 1.0));
    let k = r.get("cost_index", 0.0);
    if k < 0.0 || libm::trunc(k) != k {
        return Err(Error::InvalidParameter("`cost_index` must be a nonnegative integer".into()));
    }
    let k = k as usize;
    let slot = move |len: usize| if k == 0 { len - 1 } else { (k - 1).min(len - 1) };
    let problem = ProblemSpec::new("pure-jump", 1, 1, Box::new(move |_| v1(h0)))
        .with_jump(
            Box::new(move |_, _, x, _, b| v1(c * x[0] + d * b[0])),
            Box::new(move |_, _, _, _, _| m1(c)),
            Box::new(|_, _, _, _, _| m1(0.0)),
            Box::new(move |_, _, _, _, _| m1(d)),
        )
        .with_terminal(
            Box::new(move |xs, _| xs[slot(xs.len())][0]),
            Box::new(move |xs, _| {
                let mut g = vec![v1(0.0); xs.len()];
                g[slot(xs.len())] = v1(1.0);
                g
            }),
            Box::new(|_, us| vec![v1(0.0); us.len()]),
        )
        .with_lipschitz(0.0, c.abs());
    Ok(BuiltIn { problem, ode: None, defaults: scalar_defaults(vec![1.0 / 3.0, 2.0 / 3.0], 11, vec![0.0; 3]) })
}

/// `f = k x + β a`, `G = γ x`, `h ≡ h0`, `g = q x²/2 + r a²/2`, `φ = w_t x(T⁻)`.
fn exp_kernel(params: &Params) -> Result<BuiltIn> {
    let r = Reader { params, allowed: &["k", "beta", "gamma", "h0", "q", "r", "w_t"] };
    r.check()?;
    let (k, beta, gamma, h0) = (r.get("k", 1.0), r.get("beta", 0.5), r.get("gamma", 0.0), r.get("h0", 1.0));
    let (q, rr, w_t) = (r.get("q", 0.0), r.get("r", 0.1), r.get("w_t", 1.0));
    let problem = ProblemSpec::new("exp-kernel", 1, 1, Box::new(move |_| v1(h0)))
        .with_kernel(
            Box::new(move |_, _, x, a| v1(k * x[0] + beta * a[0])),
            Box::new(move |_, _, _, _| m1(k)),
            Box::new(move |_, _, _, _| m1(beta)),
        )
        .with_jump(
            Box::new(move |_, _, x, _, _| v1(gamma * x[0])),
            Box::new(move |_, _, _, _, _| m1(gamma)),
            Box::new(|_, _, _, _, _| m1(0.0)),
            Box::new(|_, _, _, _, _| m1(0.0)),
        )
        .with_running(
            Box::new(move |_, x, a| 0.5 * q * x[0] * x[0] + 0.5 * rr * a[0] * a[0]),
            Box::new(move |_, x, _| v1(q * x[0])),
            Box::new(move |_, _, a| v1(rr * a[0])),
        )
        .with_terminal(
            Box::new(move |xs, _| w_t * xs[xs.len() - 1][0]),
            Box::new(move |xs, _| {
                let mut g = vec![v1(0.0); xs.len()];
                g[xs.len() - 1] = v1(w_t);
                g
            }),
            Box::new(|_, us| vec![v1(0.0); us.len()]),
        )
        .with_lipschitz(k.abs(), gamma.abs());
    Ok(BuiltIn { problem, ode: None, defaults: scalar_defaults(vec![], 101, vec![0.2]) })
}

/// `f = a`, `h ≡ x0`, `g = r a²/2`; `φ = x(T⁻)`, or `(x(T⁻) − target)²` when a
/// target is given.
fn controlled_linear(params: &Params) -> Result<BuiltIn> {
    let r = Reader { params, allowed: &["x0", "r", "target"] };
    r.check()?;
    let (x0, rr) = (r.get("x0", 1.0), r.get("r", 0.0));
    let target = params.get("target").copied();
    let problem = ProblemSpec::new("controlled-linear", 1, 1, Box::new(move |_| v1(x0)))
        .with_kernel(Box::new(|_, _, _, a| v1(a[0])), Box::new(|_, _, _, _| m1(0.0)), Box::new(|_, _, _, _| m1(1.0)))
        .with_running(
            Box::new(move |_, _, a| 0.5 * rr * a[0] * a[0]),
            Box::new(|_, _, _| v1(0.0)),
            Box::new(move |_, _, a| v1(rr * a[0])),
        )
        .with_terminal(
            Box::new(move |xs, _| {
                let x_t = xs[xs.len() - 1][0];
                match target {
                    Some(z) => (x_t - z) * (x_t - z),
                    None => x_t,
                }
            }),
            Box::new(move |xs, _| {
                let x_t = xs[xs.len() - 1][0];
                let mut g = vec![v1(0.0); xs.len()];
                g[xs.len() - 1] = v1(match target {
                    Some(z) => 2.0 * (x_t - z),
                    None => 1.0,
                });
                g
            }),
            Box::new(|_, us| vec![v1(0.0); us.len()]),
        );
    Ok(BuiltIn { problem, ode: None, defaults: scalar_defaults(vec![0.5], 11, vec![0.0, 0.0]) })
}

/// Scalar impulsive LQ ODE: `dx/dt = αx + βa`, jump `γx + ζa + δb`,
/// `Φ = κ(b − a)²/2 + ρx²/2`, `g = qx²/2 + ra²/2`, `g_0 = q_f x²/2`.
pub fn lq_ode(params: &Params) -> Result<OdeProblemSpec> {
    let r =
        Reader { params, allowed: &["alpha", "beta", "gamma", "delta", "zeta", "kappa", "rho", "q", "r", "qf", "x0"] };
    r.check()?;
    let (alpha, beta) = (r.get("alpha", 0.5), r.get("beta", 1.0));
    let (gamma, delta, zeta) = (r.get("gamma", 0.3), r.get("delta", 0.2), r.get("zeta", -0.1));
    let (kappa, rho) = (r.get("kappa", 0.1), r.get("rho", 0.2));
    let (q, rr, qf, x0) = (r.get("q", 1.0), r.get("r", 0.1), r.get("qf", 1.0), r.get("x0", 1.0));
    Ok(OdeProblemSpec {
        name: "lq-impulsive-ode".into(),
        n: 1,
        m: 1,
        x0: v1(x0),
        f: Arc::new(move |_, x, a| v1(alpha * x[0] + beta * a[0])),
        f_x: Arc::new(move |_, _, _| m1(alpha)),
        f_u: Arc::new(move |_, _, _| m1(beta)),
        jump: Arc::new(move |_, x, a, b| v1(gamma * x[0] + zeta * a[0] + delta * b[0])),
        jump_x: Arc::new(move |_, _, _, _| m1(gamma)),
        jump_a: Arc::new(move |_, _, _, _| m1(zeta)),
        jump_b: Arc::new(move |_, _, _, _| m1(delta)),
        running: Arc::new(move |_, x, a| 0.5 * q * x[0] * x[0] + 0.5 * rr * a[0] * a[0]),
        running_x: Arc::new(move |_, x, _| v1(q * x[0])),
        running_u: Arc::new(move |_, _, a| v1(rr * a[0])),
        switching: Arc::new(move |x, a, b| 0.5 * kappa * (b[0] - a[0]) * (b[0] - a[0]) + 0.5 * rho * x[0] * x[0]),
        switching_x: Arc::new(move |x, _, _| v1(rho * x[0])),
        switching_a: Arc::new(move |_, a, b| v1(-kappa * (b[0] - a[0]))),
        switching_b: Arc::new(move |_, a, b| v1(kappa * (b[0] - a[0]))),
        terminal: Arc::new(move |x| 0.5 * qf * x[0] * x[0]),
        terminal_x: Arc::new(move |x| v1(qf * x[0])),
        lipschitz_f: alpha.abs(),
        lipschitz_g: gamma.abs(),
    })
}

fn lq_impulsive_ode(params: &Params) -> Result<BuiltIn> {
    let ode = lq_ode(params)?;
    Ok(BuiltIn { problem: lift_ode(&ode), ode: Some(ode), defaults: scalar_defaults(vec![0.5], 101, vec![0.1, -0.2]) })
}

/// Two-state nonlinear problem with fading memory in both the kernel and the
/// impulse response.
///
/// With `w = e^{−κ(s−t)}` and `v = e^{−κ(s−τ)}`:
/// `f = w (−λ sin x1 + c x2 + β a1, −λ sin x2 − c x1 + β a2 + ν a1 x1)`,
/// `G = v (γ tanh x1 + δ(b1 − a1), γ tanh x2 + μ x1 + δ(b2 − a2))`,
/// `h(s) = (1 + 0.2 s, 0.5)`, `g = |x − x_ref|²/2 + r|a|²/2`,
/// `φ = q_f |x(T⁻)|²/2 + Σ_i [w_b x1(τ_i⁻)²/2 + k_s |a_{i+1} − a_i|²/2]`.
fn memory_decay(params: &Params) -> Result<BuiltIn> {
    let r = Reader {
        params,
        allowed: &[
            "lambda", "c", "beta", "nu", "kappa", "gamma", "mu", "delta", "r", "qf", "wb", "ks", "xref1", "xref2",
        ],
    };
    r.check()?;
    let (lambda, c, beta, nu) = (r.get("lambda", 0.8), r.get("c", 0.5), r.get("beta", 1.0), r.get("nu", 0.3));
    let (kappa, gamma, mu, delta) = (r.get("kappa", 1.0), r.get("gamma", 0.4), r.get("mu", 0.3), r.get("delta", 0.2));
    let (rr, qf, wb, ks) = (r.get("r", 0.1), r.get("qf", 1.0), r.get("wb", 0.5), r.get("ks", 0.1));
    let x_ref = Vector::from_vec(vec![r.get("xref1", 0.5), r.get("xref2", 0.0)]);
    let decay = move |s: f64, t: f64| libm::exp(-kappa * (s - t));
    let sech2 = |x: f64| {
        let c = libm::cosh(x);
        1.0 / (c * c)
    };
    let x_ref_x = x_ref.clone();
    let problem = ProblemSpec::new("memory-decay", 2, 2, Box::new(|s| Vector::from_vec(vec![1.0 + 0.2 * s, 0.5])))
        .with_kernel(
            Box::new(move |s, t, x, a| {
                let w = decay(s, t);
                Vector::from_vec(vec![
                    w * (-lambda * libm::sin(x[0]) + c * x[1] + beta * a[0]),
                    w * (-lambda * libm::sin(x[1]) - c * x[0] + beta * a[1] + nu * a[0] * x[0]),
                ])
            }),
            Box::new(move |s, t, x, a| {
                let w = decay(s, t);
                Matrix::from_row_slice(2, 2, &[-lambda * libm::cos(x[0]), c, -c + nu * a[0], -lambda * libm::cos(x[1])])
                    * w
            }),
            Box::new(move |s, t, x, _| Matrix::from_row_slice(2, 2, &[beta, 0.0, nu * x[0], beta]) * decay(s, t)),
        )
        .with_jump(
            Box::new(move |s, tau, x, a, b| {
                let v = decay(s, tau);
                Vector::from_vec(vec![
                    v * (gamma * libm::tanh(x[0]) + delta * (b[0] - a[0])),
                    v * (gamma * libm::tanh(x[1]) + mu * x[0] + delta * (b[1] - a[1])),
                ])
            }),
            Box::new(move |s, tau, x, _, _| {
                Matrix::from_row_slice(2, 2, &[gamma * sech2(x[0]), 0.0, mu, gamma * sech2(x[1])]) * decay(s, tau)
            }),
            Box::new(move |s, tau, _, _, _| Matrix::identity(2, 2) * (-delta * decay(s, tau))),
            Box::new(move |s, tau, _, _, _| Matrix::identity(2, 2) * (delta * decay(s, tau))),
        )
        .with_running(
            Box::new(move |_, x, a| 0.5 * (x - &x_ref).norm_squared() + 0.5 * rr * a.norm_squared()),
            Box::new(move |_, x, _| x - &x_ref_x),
            Box::new(move |_, _, a| a * rr),
        )
        .with_terminal(
            Box::new(move |xs, us| {
                let last = xs.len() - 1;
                let mut phi = 0.5 * qf * xs[last].norm_squared();
                for i in 0..last {
                    phi += 0.5 * wb * xs[i][0] * xs[i][0] + 0.5 * ks * (&us[i + 1] - &us[i]).norm_squared();
                }
                phi
            }),
            Box::new(move |xs, _| {
                let last = xs.len() - 1;
                let mut g: Vec<Vector> = xs[..last].iter().map(|x| Vector::from_vec(vec![wb * x[0], 0.0])).collect();
                g.push(&xs[last] * qf);
                g
            }),
            Box::new(move |_, us| {
                let len = us.len();
                (0..len)
                    .map(|i| {
                        let mut v = Vector::zeros(2);
                        if i + 1 < len {
                            v += (&us[i] - &us[i + 1]) * ks;
                        }
                        if i > 0 {
                            v += (&us[i] - &us[i - 1]) * ks;
                        }
                        v
                    })
                    .collect()
            }),
        )
        .with_lipschitz(lambda + c.abs() + nu.abs(), gamma.abs() + mu.abs());
    Ok(BuiltIn {
        problem,
        ode: None,
        defaults: Defaults {
            tau: vec![0.5],
            horizon: 1.0,
            points_per_interval: 101,
            policy: vec![vec![0.3, -0.2], vec![-0.1, 0.4]],
            bounds: ControlBox::uniform(2, -1.0, 1.0),
        },
    })
}
