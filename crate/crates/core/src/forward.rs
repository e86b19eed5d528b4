//! Forward solvers for the impulsive Volterra state equation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::TimeMesh;
use crate::model::{ControlPolicy, PiecewiseTrajectory, ProblemSpec, Vector};

const INNER_MAX_ITER: usize = 50;

/// Interval-by-interval marching with an implicit trapezoid step at each node.
///
/// The diagonal term is resolved by fixed-point iteration to `tol / 10`. Right
/// limits are formed from the left limit plus the jump `G(τ_i, τ_i, …)`.
pub fn solve_marching(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
    tol: f64,
) -> Result<PiecewiseTrajectory> {
    policy.check_mesh(mesh)?;
    let inner_tol = tol / 10.0;
    let n_nodes = mesh.n_nodes();
    let mut x: Vec<Vector> = Vec::with_capacity(n_nodes);
    for p in 0..n_nodes {
        let k = mesh.interval_of(p);
        let s = mesh.node_time(p);
        if k > 0 && mesh.is_start(p) {
            let minus = &x[mesh.left_limit_node(k)];
            let jump = problem.jump_at(s, mesh, k, minus, policy);
            let value = minus + jump;
            x.push(value);
            continue;
        }
        let mut known = (problem.h)(s);
        for q in 0..p {
            let w = mesh.weight_to(p, q);
            if w != 0.0 {
                known += (problem.f)(s, mesh.node_time(q), &x[q], policy.at_node(mesh, q)) * w;
            }
        }
        for i in 1..=k {
            known += problem.jump_at(s, mesh, i, &x[mesh.left_limit_node(i)], policy);
        }
        let w_diag = mesh.w_left(p);
        let a = policy.at_node(mesh, p);
        let value = if w_diag == 0.0 {
            known
        } else {
            let mut y = if p > 0 { x[p - 1].clone() } else { known.clone() };
            let mut residual = f64::INFINITY;
            for _ in 0..INNER_MAX_ITER {
                let next = &known + (problem.f)(s, s, &y, a) * w_diag;
                residual = (&next - &y).amax();
                y = next;
                if residual <= inner_tol {
                    break;
                }
            }
            if !(residual <= inner_tol) {
                return Err(Error::InnerNotConverged { node: p, residual });
            }
            y
        };
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("state at node {p}")));
        }
        x.push(value);
    }
    Ok(PiecewiseTrajectory::new(problem.n, x))
}

/// A point `(ξ, η)` of the product space acted on by `S`: a continuous part on
/// the mesh and one vector per impulse.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPair {
    pub xi: PiecewiseTrajectory,
    pub eta: Vec<Vector>,
}

impl OperatorPair {
    /// `z_0 = (h, h(τ_i))`.
    pub fn initial(problem: &ProblemSpec, mesh: &TimeMesh) -> Self {
        let xi = PiecewiseTrajectory::from_fn(problem.n, mesh, |_, s| (problem.h)(s));
        let eta = (1..=mesh.n_impulses()).map(|i| (problem.h)(mesh.tau(i))).collect();
        Self { xi, eta }
    }

    /// `(sup_t e^{-μt}|ξ(t)|, max_i e^{-μτ_i}|η_i|)`.
    pub fn weighted_norms(&self, mesh: &TimeMesh, mu: f64) -> (f64, f64) {
        let c = self
            .xi
            .values
            .iter()
            .enumerate()
            .map(|(p, v)| libm::exp(-mu * mesh.node_time(p)) * v.amax())
            .fold(0.0, f64::max);
        let d =
            self.eta.iter().enumerate().map(|(i, v)| libm::exp(-mu * mesh.tau(i + 1)) * v.amax()).fold(0.0, f64::max);
        (c, d)
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self {
            xi: PiecewiseTrajectory::new(
                self.xi.dim,
                self.xi.values.iter().zip(&other.xi.values).map(|(a, b)| a - b).collect(),
            ),
            eta: self.eta.iter().zip(&other.eta).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.eta.iter().map(|v| v.amax()).fold(self.xi.sup_norm(), f64::max)
    }
}

/// One application of the Picard operator `S = (S_c, S_d)` with trapezoid quadrature.
pub fn apply_s(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
    z: &OperatorPair,
) -> Result<OperatorPair> {
    policy.check_mesh(mesh)?;
    if z.eta.len() != mesh.n_impulses() || z.xi.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch("operator pair does not match mesh".into()));
    }
    let n_nodes = mesh.n_nodes();
    let mut xi = Vec::with_capacity(n_nodes);
    for p in 0..n_nodes {
        let s = mesh.node_time(p);
        let mut v = (problem.h)(s);
        for q in 0..=p {
            let w = mesh.weight_to(p, q);
            if w != 0.0 {
                v += (problem.f)(s, mesh.node_time(q), &z.xi.values[q], policy.at_node(mesh, q)) * w;
            }
        }
        for i in 1..=mesh.active_impulses(p) {
            v += problem.jump_at(s, mesh, i, &z.eta[i - 1], policy);
        }
        xi.push(v);
    }
    // S_d's i-th entry is S_c evaluated at the left-limit node of τ_i
    let eta = (1..=mesh.n_impulses()).map(|i| xi[mesh.left_limit_node(i)].clone()).collect();
    Ok(OperatorPair { xi: PiecewiseTrajectory::new(problem.n, xi), eta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub trajectory: PiecewiseTrajectory,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm of the last step.
    pub final_step: f64,
    /// Per-iteration steps `z_{k+1} − z_k`.
    pub steps: Vec<OperatorPair>,
}

impl PicardResult {
    /// `μ`-weighted step norms `max(‖Δξ‖_μ, ‖Δη‖_μ)` per iteration.
    pub fn weighted_step_norms(&self, mesh: &TimeMesh, mu: f64) -> Vec<f64> {
        self.steps
            .iter()
            .map(|d| {
                let (c, e) = d.weighted_norms(mesh, mu);
                c.max(e)
            })
            .collect()
    }
}

/// Picard iteration `z_{k+1} = S z_k` from `z_0 = (h, h(τ_i))` until the sup-norm
/// step drops below `tol`.
pub fn solve_picard(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
    tol: f64,
    max_iter: usize,
) -> Result<PicardResult> {
    let mut z = OperatorPair::initial(problem, mesh);
    let mut steps = Vec::new();
    let mut final_step = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = apply_s(problem, policy, mesh, &z)?;
        let diff = next.difference(&z);
        final_step = diff.sup_norm();
        steps.push(diff);
        z = next;
        iterations += 1;
        if !final_step.is_finite() {
            break;
        }
        if final_step < tol {
            converged = true;
            break;
        }
    }
    let mut trajectory = z.xi;
    for (i, eta) in z.eta.into_iter().enumerate() {
        trajectory.values[mesh.left_limit_node(i + 1)] = eta;
    }
    Ok(PicardResult { trajectory, iterations, converged, final_step, steps })
}

/// Sup-norm of `S(x) − x` for a trajectory `x`, with `η_i = x(τ_i⁻)`.
pub fn fixed_point_residual(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
    x: &PiecewiseTrajectory,
) -> Result<f64> {
    let z =
        OperatorPair { xi: x.clone(), eta: (1..=mesh.n_impulses()).map(|i| x.left_limit(mesh, i).clone()).collect() };
    Ok(apply_s(problem, policy, mesh, &z)?.difference(&z).sup_norm())
}

/// Largest `|x(τ_i⁺) − x(τ_i⁻) − G(τ_i, τ_i, x(τ_i⁻), a_i, a_{i+1})|`.
pub fn jump_consistency(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
    x: &PiecewiseTrajectory,
) -> f64 {
    (1..=mesh.n_impulses())
        .map(|i| {
            let minus = x.left_limit(mesh, i);
            let jump = problem.jump_at(mesh.tau(i), mesh, i, minus, policy);
            (x.right_limit(mesh, i) - minus - jump).amax()
        })
        .fold(0.0, f64::max)
}

/// The 2×2 matrix bounding `S` in `μ`-weighted norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCertificate {
    pub mu: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub spectral_ok: bool,
}

impl ContractionCertificate {
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        let tr = self.trace();
        let disc = tr * tr - 4.0 * self.det();
        if disc >= 0.0 {
            let r = libm::sqrt(disc);
            libm::fabs(0.5 * (tr + r)).max(libm::fabs(0.5 * (tr - r)))
        } else {
            libm::sqrt(self.det())
        }
    }
}

/// Certificate entries for Lipschitz constants `c_f`, `c_g` and weight `μ > 0`.
///
/// `h` is the smallest gap between breakpoints. With no impulses only `a11` is
/// nonzero.
pub fn contraction_certificate(c_f: f64, c_g: f64, mesh: &TimeMesh, mu: f64) -> ContractionCertificate {
    let big_t = mesh.horizon();
    let n = mesh.n_impulses();
    let a11 = c_f * (1.0 - libm::exp(-mu * big_t)) / mu;
    let (a12, a21, a22) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let h = mesh.h_gap();
        let r = libm::exp(-mu * h);
        let geometric = r * (1.0 - libm::exp(-((n - 1) as f64) * mu * h)) / (1.0 - r);
        let a21 = c_f * (1.0 - libm::exp(-mu * mesh.tau(n))) / mu;
        (c_g * (1.0 + geometric), a21, c_g * geometric)
    };
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a21;
    let spectral_ok = libm::fabs(tr) - 1.0 < det && det < 1.0;
    ContractionCertificate { mu, a11, a12, a21, a22, spectral_ok }
}

/// Smallest `μ = 2^k` (k = 0..=20) with a passing certificate.
pub fn find_certifying_mu(c_f: f64, c_g: f64, mesh: &TimeMesh) -> Option<ContractionCertificate> {
    (0..=20).map(|k| contraction_certificate(c_f, c_g, mesh, libm::ldexp(1.0, k))).find(|c| c.spectral_ok)
}
