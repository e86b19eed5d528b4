//! Adjoint gradient: the co-state `ψ`, the gradient blocks `Δ_i` with
//! `δJ = −Σ Δ_i·α_i`, stationarity over the control box, and the impulsive
//! Hamiltonian.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::ResolventGrid;
use crate::linear::{dual_residual, impulse_dual_sums};
use crate::mesh::TimeMesh;
use crate::model::{ControlPolicy, ControlVariation, PiecewiseTrajectory, ProblemSpec, Vector};
use crate::variational::{Linearization, SensitivityContext};

/// `ξ` together with the boundary weights `c_j = Σ_{k=j}^{N+1} φ_{x_k} M(j,k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiField {
    pub xi: PiecewiseTrajectory,
    /// `c_j`, `j = 1..=N+1`, as row vectors.
    pub boundary_weights: Vec<Vector>,
}

/// `ξ(t) = g_x(t) + Σ_{j: t<τ_j} c_j f_x(τ_j, t)`.
pub fn xi_field(lin: &Linearization, mesh: &TimeMesh) -> XiField {
    let n_int = mesh.n_intervals();
    let c: Vec<Vector> = (1..=n_int)
        .map(|j| {
            let mut acc = Vector::zeros(lin.n);
            for k in j..=n_int {
                acc += lin.table.entry(j, k).tr_mul(&lin.terminal_x[k - 1]);
            }
            acc
        })
        .collect();
    let mut xi = lin.running_x.clone();
    for (j, cj) in c.iter().enumerate() {
        let e_j = mesh.left_limit_node(j + 1);
        for (q, slot) in xi.iter_mut().enumerate().take(e_j + 1) {
            lin.f_x.apply_left(e_j, q, cj, 1.0, slot);
        }
    }
    XiField { xi: PiecewiseTrajectory::new(lin.n, xi), boundary_weights: c }
}

/// The co-state on the mesh.
///
/// `psi` is the trapezoid evaluation of `ψ(t) = −ξ(t) − ∫_t^T ξ(s) R(s,t) ds`.
/// `multipliers` are `λ_q = W_q ψ_q` with the `s`-integral taken as the exact
/// transpose of the forward quadrature; they differ from `W_q psi_q` only at
/// the two ends of each interval, by `O(h²)`, and make `−Σ Δ_i α_i` equal the
/// directly computed `δJ` to roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateField {
    pub psi: PiecewiseTrajectory,
    pub multipliers: Vec<Vector>,
}

pub fn costate_psi(xi: &PiecewiseTrajectory, r: &ResolventGrid, mesh: &TimeMesh) -> CostateField {
    let n = xi.dim;
    let n_nodes = mesh.n_nodes();
    let mut psi: Vec<Vector> = xi.values.iter().map(|v| -v).collect();
    let mut lambda: Vec<Vector> = (0..n_nodes).map(|q| &xi.values[q] * -mesh.weight(q)).collect();
    for p in 0..n_nodes {
        let xp = &xi.values[p];
        let wp = mesh.weight(p);
        for q in 0..=p {
            let w_trap = mesh.weight_from(q, p);
            if w_trap != 0.0 {
                r.kernel.apply_left(p, q, xp, -w_trap, &mut psi[q]);
            }
            let w_fwd = mesh.weight_to(p, q);
            if w_fwd != 0.0 {
                r.kernel.apply_left(p, q, xp, -wp * w_fwd, &mut lambda[q]);
            }
        }
    }
    CostateField { psi: PiecewiseTrajectory::new(n, psi), multipliers: lambda }
}

/// Defect of the co-state integral equation, read as the dual equation of the
/// variational system with forcing `−ξ`.
pub fn costate_residual(lin: &Linearization, xi: &XiField, costate: &CostateField, mesh: &TimeMesh) -> f64 {
    let sys = lin.linear_system(PiecewiseTrajectory::zeros(lin.n, mesh));
    let minus_xi = PiecewiseTrajectory::new(lin.n, xi.xi.values.iter().map(|v| -v).collect());
    dual_residual(&sys, &lin.table, &costate.psi, &minus_xi, mesh)
}

/// Everything the adjoint needs along one trajectory.
#[derive(Debug, Clone)]
pub struct AdjointState {
    pub xi: XiField,
    pub costate: CostateField,
}

impl AdjointState {
    pub fn new(ctx: &SensitivityContext, mesh: &TimeMesh) -> Self {
        let xi = xi_field(&ctx.lin, mesh);
        let costate = costate_psi(&xi.xi, &ctx.resolvent, mesh);
        Self { xi, costate }
    }
}

/// `Δ_i ∈ R^m`, `i = 1..=N+1`.
pub type DeltaVector = Vec<Vector>;

/// `e_j = c_j − D_j` with `D_j = Σ_{i=j}^N (∫_{τ_i}^T y L(s,τ_i) ds) M(j,i)`,
/// where `y_p` already carries its quadrature weight.
pub(crate) fn boundary_costs(lin: &Linearization, c: &[Vector], weighted: &[Vector], mesh: &TimeMesh) -> Vec<Vector> {
    let d = impulse_dual_sums(&lin.jump_x, &lin.table, mesh, weighted, |_| 1.0);
    c.iter().enumerate().map(|(j, cj)| if j < d.len() { cj - &d[j] } else { cj.clone() }).collect()
}

/// Gradient blocks from the co-state multipliers.
///
/// `Δ_i = ∫_{τ_{i−1}}^{τ_i} ∫_t^T ψ f_u ds dt + ∫_{τ_i}^T ψ G_a(·,τ_i) + ∫_{τ_{i−1}}^T ψ G_b(·,τ_{i−1})
///  − φ_{a_i} − ∫_{τ_{i−1}}^{τ_i} g_u − Σ_j e_j [∫ f_u(τ_j,t) dt + G_a(τ_j,τ_i) + G_b(τ_j,τ_{i−1})]`
/// with `e_j = c_j − D_j` and each impulse term present only when its index is in range.
pub fn delta_vector(lin: &Linearization, adj: &AdjointState, mesh: &TimeMesh) -> DeltaVector {
    let (n, m) = (lin.n, lin.m);
    let lambda = &adj.costate.multipliers;
    let e = boundary_costs(lin, &adj.xi.boundary_weights, lambda, mesh);
    let n_int = mesh.n_intervals();
    let n_imp = mesh.n_impulses();
    let n_nodes = mesh.n_nodes();
    let row_times = |row: &Vector, block: &[f64], w: f64, out: &mut Vector| {
        for r in 0..n {
            let f = w * row[r];
            if f == 0.0 {
                continue;
            }
            for c in 0..m {
                out[c] += f * block[r * m + c];
            }
        }
    };
    (1..=n_int)
        .map(|i| {
            let k = i - 1;
            let mut delta = Vector::zeros(m);
            for q in mesh.interval_nodes(k) {
                for p in q..n_nodes {
                    let w = mesh.weight_to(p, q);
                    if w != 0.0 {
                        row_times(&lambda[p], lin.f_u.block(p, q), w, &mut delta);
                    }
                }
                delta.axpy(-mesh.weight(q), &lin.running_u[q], 1.0);
            }
            if i <= n_imp {
                for p in mesh.start_node(i)..n_nodes {
                    row_times(&lambda[p], lin.jump_a.block(i, p), 1.0, &mut delta);
                }
            }
            if i >= 2 {
                for p in mesh.start_node(i - 1)..n_nodes {
                    row_times(&lambda[p], lin.jump_b.block(i - 1, p), 1.0, &mut delta);
                }
            }
            delta -= &lin.terminal_a[k];
            for j in i..=n_int {
                let e_j = mesh.left_limit_node(j);
                let ej = &e[j - 1];
                for q in mesh.interval_nodes(k) {
                    row_times(ej, lin.f_u.block(e_j, q), -mesh.weight_to(e_j, q), &mut delta);
                }
                if i <= n_imp && j > i {
                    row_times(ej, lin.jump_a.block(i, e_j), -1.0, &mut delta);
                }
                if i >= 2 {
                    row_times(ej, lin.jump_b.block(i - 1, e_j), -1.0, &mut delta);
                }
            }
            delta
        })
        .collect()
}

/// `δJ = −Σ Δ_i·α_i`.
pub fn delta_j_adjoint(delta: &DeltaVector, alpha: &ControlVariation) -> Result<f64> {
    if delta.len() != alpha.len() || delta.iter().zip(alpha).any(|(d, a)| d.len() != a.len()) {
        return Err(Error::DimensionMismatch("Δ and α have different shapes".into()));
    }
    Ok(-delta.iter().zip(alpha).map(|(d, a)| d.dot(a)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxFace {
    Interior,
    Lower,
    Upper,
    /// `lo == hi`: no admissible variation.
    Pinned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    /// Interval / control index `i` (1-based).
    pub interval: usize,
    pub component: usize,
    pub delta: f64,
    pub face: BoxFace,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub components: Vec<ComponentCheck>,
    pub worst_violation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// First-order condition `Σ Δ_i·α_i ≤ 0` for every admissible `α`, checked per
/// box component: interior components need `|Δ| ≤ tol`, a component on its
/// lower face needs `Δ ≤ tol`, on its upper face `Δ ≥ −tol`.
pub fn check_stationarity(delta: &DeltaVector, policy: &ControlPolicy, tol: f64) -> StationarityReport {
    let bounds = &policy.bounds;
    let mut components = Vec::new();
    for (k, (d, a)) in delta.iter().zip(&policy.values).enumerate() {
        for c in 0..d.len() {
            let (lo, hi) = (bounds.lo[c], bounds.hi[c]);
            let face_tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            let face = if hi - lo <= face_tol {
                BoxFace::Pinned
            } else if a[c] - lo <= face_tol {
                BoxFace::Lower
            } else if hi - a[c] <= face_tol {
                BoxFace::Upper
            } else {
                BoxFace::Interior
            };
            let violation = match face {
                BoxFace::Pinned => 0.0,
                BoxFace::Interior => d[c].abs(),
                BoxFace::Lower => d[c].max(0.0),
                BoxFace::Upper => (-d[c]).max(0.0),
            };
            components.push(ComponentCheck { interval: k + 1, component: c, delta: d[c], face, violation });
        }
    }
    let worst_violation = components.iter().map(|c| c.violation).fold(0.0, f64::max);
    StationarityReport { components, worst_violation, tol, passed: worst_violation <= tol }
}

/// Evaluates the impulsive Hamiltonian at mesh node `q` with the co-state
/// frozen:
/// `H = −g(t,x,u) − Σ_{j: t<τ_j} e_j f(τ_j,t,x,u) + ∫_t^T ψ(s) f(s,t,x,u) ds`.
pub struct Hamiltonian<'a> {
    problem: &'a ProblemSpec,
    mesh: &'a TimeMesh,
    psi: &'a PiecewiseTrajectory,
    boundary_costs: Vec<Vector>,
}

impl<'a> Hamiltonian<'a> {
    pub fn new(problem: &'a ProblemSpec, lin: &Linearization, adj: &'a AdjointState, mesh: &'a TimeMesh) -> Self {
        let weighted: Vec<Vector> =
            adj.costate.psi.values.iter().enumerate().map(|(p, v)| v * mesh.weight(p)).collect();
        let boundary_costs = boundary_costs(lin, &adj.xi.boundary_weights, &weighted, mesh);
        Self { problem, mesh, psi: &adj.costate.psi, boundary_costs }
    }

    pub fn value(&self, q: usize, x_val: &Vector, u_val: &Vector) -> f64 {
        let mesh = self.mesh;
        let t = mesh.node_time(q);
        let mut h = -(self.problem.running)(t, x_val, u_val);
        for (j, ej) in self.boundary_costs.iter().enumerate() {
            if q <= mesh.left_limit_node(j + 1) {
                h -= ej.dot(&(self.problem.f)(mesh.tau(j + 1), t, x_val, u_val));
            }
        }
        for p in q..mesh.n_nodes() {
            let w = mesh.weight_from(q, p);
            if w != 0.0 {
                h += w * self.psi.values[p].dot(&(self.problem.f)(mesh.node_time(p), t, x_val, u_val));
            }
        }
        h
    }

    /// Central difference of `H` in its `x` slot.
    pub fn gradient_x(&self, q: usize, x_val: &Vector, u_val: &Vector, step: f64) -> Vector {
        Vector::from_iterator(
            x_val.len(),
            (0..x_val.len()).map(|c| {
                let mut xp = x_val.clone();
                let mut xm = x_val.clone();
                xp[c] += step;
                xm[c] -= step;
                (self.value(q, &xp, u_val) - self.value(q, &xm, u_val)) / (2.0 * step)
            }),
        )
    }
}

/// `H` at node `q`.
pub fn hamiltonian_h(
    problem: &ProblemSpec,
    lin: &Linearization,
    adj: &AdjointState,
    mesh: &TimeMesh,
    q: usize,
    x_val: &Vector,
    u_val: &Vector,
) -> f64 {
    Hamiltonian::new(problem, lin, adj, mesh).value(q, x_val, u_val)
}

/// `sup_t |ψ(t) − ∂H/∂x(t, x(t), u(t))|`, differentiating `f` and `g` numerically.
pub fn hamiltonian_gradient_residual(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    lin: &Linearization,
    adj: &AdjointState,
    mesh: &TimeMesh,
) -> f64 {
    let ham = Hamiltonian::new(problem, lin, adj, mesh);
    (0..mesh.n_nodes())
        .map(|q| {
            let g = ham.gradient_x(q, &x.values[q], policy.at_node(mesh, q), 1e-6);
            (&adj.costate.psi.values[q] - g).amax()
        })
        .fold(0.0, f64::max)
}

/// Unit variation along component `c` of control `i` (0-based interval `k`).
pub fn unit_variation(mesh: &TimeMesh, m: usize, k: usize, c: usize) -> ControlVariation {
    let mut alpha = vec![Vector::zeros(m); mesh.n_intervals()];
    alpha[k][c] = 1.0;
    alpha
}

/// `Δ` for a policy with all intermediate objects built internally.
pub fn gradient(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    mesh: &TimeMesh,
    tol: f64,
) -> Result<(SensitivityContext, AdjointState, DeltaVector)> {
    let ctx = SensitivityContext::new(problem, policy, x, mesh, tol)?;
    let adj = AdjointState::new(&ctx, mesh);
    let delta = delta_vector(&ctx.lin, &adj, mesh);
    Ok((ctx, adj, delta))
}
