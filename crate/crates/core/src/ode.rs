//! Impulsive ODE control problems
//! `dx/dt = f(t,x,u)`, `x(τ_i⁺) = x(τ_i⁻) + G(τ_i, x(τ_i⁻), a_i, a_{i+1})`,
//! `J = ∫ g + Σ Φ(x(τ_i⁻), a_i, a_{i+1}) + g_0(x(T⁻))`,
//! their Volterra lift, and the co-state `p`.
//!
//! `p` follows `dp/dt = g_x − p f_x` with the jump
//! `p(τ⁺) − p(τ⁻) = Φ_x − p(τ⁺) G_x` and terminal value `p(T⁻) = −g_{0,x}`.
//! With these signs `ψ = −dp/dt` is the Volterra co-state of the lift.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::adjoint::{check_stationarity, delta_vector, AdjointState, CostateField, DeltaVector, StationarityReport};
use crate::error::{Error, Result};
use crate::forward::solve_marching;
use crate::linear::PathSumTable;
use crate::mesh::TimeMesh;
use crate::model::{ControlPolicy, Matrix, PiecewiseTrajectory, ProblemSpec, Vector};
use crate::variational::SensitivityContext;

pub type OdeFieldFn = Arc<dyn Fn(f64, &Vector, &Vector) -> Vector + Send + Sync>;
pub type OdeFieldJacFn = Arc<dyn Fn(f64, &Vector, &Vector) -> Matrix + Send + Sync>;
pub type OdeJumpFn = Arc<dyn Fn(f64, &Vector, &Vector, &Vector) -> Vector + Send + Sync>;
pub type OdeJumpJacFn = Arc<dyn Fn(f64, &Vector, &Vector, &Vector) -> Matrix + Send + Sync>;
pub type OdeRunningFn = Arc<dyn Fn(f64, &Vector, &Vector) -> f64 + Send + Sync>;
pub type OdeRunningGradFn = Arc<dyn Fn(f64, &Vector, &Vector) -> Vector + Send + Sync>;
pub type SwitchingFn = Arc<dyn Fn(&Vector, &Vector, &Vector) -> f64 + Send + Sync>;
pub type SwitchingGradFn = Arc<dyn Fn(&Vector, &Vector, &Vector) -> Vector + Send + Sync>;
pub type FinalFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
pub type FinalGradFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

#[derive(Clone)]
pub struct OdeProblemSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub x0: Vector,
    pub f: OdeFieldFn,
    pub f_x: OdeFieldJacFn,
    pub f_u: OdeFieldJacFn,
    pub jump: OdeJumpFn,
    pub jump_x: OdeJumpJacFn,
    pub jump_a: OdeJumpJacFn,
    pub jump_b: OdeJumpJacFn,
    pub running: OdeRunningFn,
    pub running_x: OdeRunningGradFn,
    pub running_u: OdeRunningGradFn,
    /// `Φ(x(τ_i⁻), a_i, a_{i+1})`.
    pub switching: SwitchingFn,
    pub switching_x: SwitchingGradFn,
    pub switching_a: SwitchingGradFn,
    pub switching_b: SwitchingGradFn,
    pub terminal: FinalFn,
    pub terminal_x: FinalGradFn,
    pub lipschitz_f: f64,
    pub lipschitz_g: f64,
}

impl core::fmt::Debug for OdeProblemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("OdeProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

/// Volterra form: `h ≡ x_0`, `f(s,t,x,a) = f(t,x,a)`, `G(s,τ,x,a,b) = G(τ,x,a,b)`,
/// `φ = Σ_i Φ(x(τ_i⁻), a_i, a_{i+1}) + g_0(x(τ_{N+1}⁻))`.
pub fn lift_ode(ode: &OdeProblemSpec) -> ProblemSpec {
    let x0 = ode.x0.clone();
    let (f, f_x, f_u) = (ode.f.clone(), ode.f_x.clone(), ode.f_u.clone());
    let (gj, gj_x, gj_a, gj_b) = (ode.jump.clone(), ode.jump_x.clone(), ode.jump_a.clone(), ode.jump_b.clone());
    let (g, g_x, g_u) = (ode.running.clone(), ode.running_x.clone(), ode.running_u.clone());
    let phi = ode.switching.clone();
    let (phi_x, phi_a, phi_b) = (ode.switching_x.clone(), ode.switching_a.clone(), ode.switching_b.clone());
    let (g0, g0_x) = (ode.terminal.clone(), ode.terminal_x.clone());
    let m = ode.m;

    let terminal = {
        let (phi, g0) = (phi.clone(), g0.clone());
        Box::new(move |xs: &[Vector], us: &[Vector]| {
            let n_imp = xs.len() - 1;
            (1..=n_imp).map(|i| phi(&xs[i - 1], &us[i - 1], &us[i])).sum::<f64>() + g0(&xs[n_imp])
        })
    };
    let terminal_x = {
        let phi_x = phi_x.clone();
        Box::new(move |xs: &[Vector], us: &[Vector]| {
            let n_imp = xs.len() - 1;
            let mut out: Vec<Vector> = (1..=n_imp).map(|i| phi_x(&xs[i - 1], &us[i - 1], &us[i])).collect();
            out.push(g0_x(&xs[n_imp]));
            out
        })
    };
    let terminal_a = Box::new(move |xs: &[Vector], us: &[Vector]| {
        let n_imp = xs.len() - 1;
        (1..=n_imp + 1)
            .map(|i| {
                let mut v = Vector::zeros(m);
                if i <= n_imp {
                    v += phi_a(&xs[i - 1], &us[i - 1], &us[i]);
                }
                if i >= 2 {
                    v += phi_b(&xs[i - 2], &us[i - 2], &us[i - 1]);
                }
                v
            })
            .collect()
    });

    let f1 = f.clone();
    ProblemSpec::new(ode.name.clone(), ode.n, ode.m, Box::new(move |_| x0.clone()))
        .with_kernel(
            Box::new(move |_, t, x, a| f1(t, x, a)),
            Box::new(move |_, t, x, a| f_x(t, x, a)),
            Box::new(move |_, t, x, a| f_u(t, x, a)),
        )
        .with_jump(
            Box::new(move |_, tau, x, a, b| gj(tau, x, a, b)),
            Box::new(move |_, tau, x, a, b| gj_x(tau, x, a, b)),
            Box::new(move |_, tau, x, a, b| gj_a(tau, x, a, b)),
            Box::new(move |_, tau, x, a, b| gj_b(tau, x, a, b)),
        )
        .with_running(
            Box::new(move |t, x, a| g(t, x, a)),
            Box::new(move |t, x, a| g_x(t, x, a)),
            Box::new(move |t, x, a| g_u(t, x, a)),
        )
        .with_terminal(terminal, terminal_x, terminal_a)
        .with_lipschitz(ode.lipschitz_f, ode.lipschitz_g)
}

/// ODE co-state `p` (row vector) on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeCostate {
    pub p: PiecewiseTrajectory,
}

fn impulse_args<'a>(
    policy: &'a ControlPolicy,
    x: &'a PiecewiseTrajectory,
    mesh: &TimeMesh,
    i: usize,
) -> (f64, &'a Vector, &'a Vector, &'a Vector) {
    (mesh.tau(i), x.left_limit(mesh, i), &policy.values[i - 1], &policy.values[i])
}

/// `Γ(j, i)` path sums of `G_x(τ_k, x(τ_k⁻), a_k, a_{k+1})` up to `i = N+1`.
pub fn ode_path_table(
    ode: &OdeProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    mesh: &TimeMesh,
) -> PathSumTable {
    let gx: Vec<Matrix> = (1..=mesh.n_impulses())
        .map(|k| {
            let (tau, xm, a, b) = impulse_args(policy, x, mesh, k);
            (ode.jump_x)(tau, xm, a, b)
        })
        .collect();
    PathSumTable::build(ode.n, mesh.n_intervals(), |_, k| gx[k - 1].clone())
}

/// `p(t) = ∫_t^T ψ + Σ_{j: t<τ_j<T} Σ_{i=j}^N [−Φ_x + (∫_{τ_i}^T ψ) G_x](τ_i) Γ(j,i)
///        − Σ_{j: t<τ_j≤T} g_{0,x} Γ(j,N+1)`.
pub fn costate_p_from_psi(
    psi: &PiecewiseTrajectory,
    ode: &OdeProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    mesh: &TimeMesh,
) -> OdeCostate {
    let n = ode.n;
    let n_nodes = mesh.n_nodes();
    let n_imp = mesh.n_impulses();
    let table = ode_path_table(ode, policy, x, mesh);
    // tail integrals ∫_{t_q}^T ψ by trapezoid, accumulated from the right
    let mut tail = alloc::vec![Vector::zeros(n); n_nodes];
    let mut acc = Vector::zeros(n);
    for q in (0..n_nodes).rev() {
        if q + 1 < n_nodes {
            acc.axpy(mesh.w_right(q), &psi.values[q], 1.0);
            acc.axpy(mesh.w_left(q + 1), &psi.values[q + 1], 1.0);
        }
        tail[q] = acc.clone();
    }
    let impulse_terms: Vec<Vector> = (1..=n_imp)
        .map(|i| {
            let (tau, xm, a, b) = impulse_args(policy, x, mesh, i);
            (ode.jump_x)(tau, xm, a, b).tr_mul(&tail[mesh.right_limit_node(i)]) - (ode.switching_x)(xm, a, b)
        })
        .collect();
    let g0x = (ode.terminal_x)(x.left_limit(mesh, mesh.n_intervals()));
    let boundary: Vec<Vector> = (1..=mesh.n_intervals())
        .map(|j| {
            let mut v = -table.entry(j, n_imp + 1).tr_mul(&g0x);
            for i in j..=n_imp {
                v += table.entry(j, i).tr_mul(&impulse_terms[i - 1]);
            }
            v
        })
        .collect();
    let p = (0..n_nodes)
        .map(|q| {
            let mut v = tail[q].clone();
            for (j, b) in boundary.iter().enumerate() {
                if q <= mesh.left_limit_node(j + 1) {
                    v += b;
                }
            }
            v
        })
        .collect();
    OdeCostate { p: PiecewiseTrajectory::new(n, p) }
}

/// Backward implicit-trapezoid sweep of `dp/dt = g_x − p f_x` from
/// `p(T⁻) = −g_{0,x}`, with `p(τ⁻) = p(τ⁺) − [Φ_x − p(τ⁺) G_x]` between intervals.
pub fn solve_costate_backward(
    ode: &OdeProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    mesh: &TimeMesh,
) -> Result<OdeCostate> {
    policy.check_mesh(mesh)?;
    let n = ode.n;
    let n_nodes = mesh.n_nodes();
    let mut p = alloc::vec![Vector::zeros(n); n_nodes];
    let fx: Vec<Matrix> =
        (0..n_nodes).map(|q| (ode.f_x)(mesh.node_time(q), &x.values[q], policy.at_node(mesh, q))).collect();
    let gx: Vec<Vector> =
        (0..n_nodes).map(|q| (ode.running_x)(mesh.node_time(q), &x.values[q], policy.at_node(mesh, q))).collect();
    let last = n_nodes - 1;
    p[last] = -(ode.terminal_x)(&x.values[last]);
    for k in (0..mesh.n_intervals()).rev() {
        let nodes = mesh.interval_nodes(k);
        let h = mesh.interval_spacing(k);
        if k < mesh.n_intervals() - 1 {
            let i = k + 1;
            let plus = p[mesh.right_limit_node(i)].clone();
            let (tau, xm, a, b) = impulse_args(policy, x, mesh, i);
            let jump = (ode.switching_x)(xm, a, b) - (ode.jump_x)(tau, xm, a, b).tr_mul(&plus);
            p[mesh.left_limit_node(i)] = plus - jump;
        }
        for q in (nodes.start..nodes.end - 1).rev() {
            let next = &p[q + 1];
            let rhs = next - (&gx[q] + &gx[q + 1]) * (0.5 * h) + fx[q + 1].tr_mul(next) * (0.5 * h);
            let a = (Matrix::identity(n, n) - &fx[q] * (0.5 * h)).transpose();
            let value =
                a.lu().solve(&rhs).ok_or_else(|| Error::NonFinite(alloc::format!("co-state step at node {q}")))?;
            if !value.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("co-state at node {q}")));
            }
            p[q] = value;
        }
    }
    Ok(OdeCostate { p: PiecewiseTrajectory::new(n, p) })
}

/// Residuals of the co-state conditions for one `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateResiduals {
    /// Largest defect of the trapezoid relation for `dp/dt = g_x − p f_x`.
    pub dynamics: f64,
    /// `|p(τ_k⁺) − p(τ_k⁻) − Φ_x + p(τ_k⁺) G_x|` per impulse.
    pub jumps: Vec<f64>,
    /// `|p(T⁻) + g_{0,x}(x(T⁻))|`.
    pub terminal: f64,
}

pub fn costate_residuals(
    ode: &OdeProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    costate: &OdeCostate,
    mesh: &TimeMesh,
) -> CostateResiduals {
    let p = &costate.p.values;
    let rhs = |q: usize| {
        let (t, xq, a) = (mesh.node_time(q), &x.values[q], policy.at_node(mesh, q));
        (ode.running_x)(t, xq, a) - (ode.f_x)(t, xq, a).tr_mul(&p[q])
    };
    let mut dynamics: f64 = 0.0;
    for k in 0..mesh.n_intervals() {
        let h = mesh.interval_spacing(k);
        let nodes = mesh.interval_nodes(k);
        for q in nodes.start..nodes.end - 1 {
            let defect = &p[q + 1] - &p[q] - (rhs(q) + rhs(q + 1)) * (0.5 * h);
            dynamics = dynamics.max(defect.amax());
        }
    }
    let jumps = (1..=mesh.n_impulses())
        .map(|i| {
            let (tau, xm, a, b) = impulse_args(policy, x, mesh, i);
            let plus = costate.p.right_limit(mesh, i);
            let minus = costate.p.left_limit(mesh, i);
            (plus - minus - (ode.switching_x)(xm, a, b) + (ode.jump_x)(tau, xm, a, b).tr_mul(plus)).amax()
        })
        .collect();
    let end = mesh.n_intervals();
    let terminal = (costate.p.left_limit(mesh, end) + (ode.terminal_x)(x.left_limit(mesh, end))).amax();
    CostateResiduals { dynamics, jumps, terminal }
}

/// Residuals of the state equations in Hamiltonian form:
/// `dx/dt + ∂H_c/∂p = dx/dt − f` and `x(τ⁺) − x(τ⁻) + ∂H_d/∂p = x(τ⁺) − x(τ⁻) − G`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateResiduals {
    pub initial: f64,
    pub dynamics: f64,
    pub jumps: Vec<f64>,
}

pub fn state_residuals(
    ode: &OdeProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    mesh: &TimeMesh,
) -> StateResiduals {
    let fval = |q: usize| (ode.f)(mesh.node_time(q), &x.values[q], policy.at_node(mesh, q));
    let mut dynamics: f64 = 0.0;
    for k in 0..mesh.n_intervals() {
        let h = mesh.interval_spacing(k);
        let nodes = mesh.interval_nodes(k);
        for q in nodes.start..nodes.end - 1 {
            let defect = &x.values[q + 1] - &x.values[q] - (fval(q) + fval(q + 1)) * (0.5 * h);
            dynamics = dynamics.max(defect.amax());
        }
    }
    let jumps = (1..=mesh.n_impulses())
        .map(|i| {
            let (tau, xm, a, b) = impulse_args(policy, x, mesh, i);
            (x.right_limit(mesh, i) - xm - (ode.jump)(tau, xm, a, b)).amax()
        })
        .collect();
    StateResiduals { initial: (&x.values[0] - &ode.x0).amax(), dynamics, jumps }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeReport {
    /// `sup |p_from_ψ − p_backward|`.
    pub route_discrepancy: f64,
    pub from_psi: CostateResiduals,
    pub backward: CostateResiduals,
    pub state: StateResiduals,
    /// `Δ` from the Volterra co-state of the lift.
    pub delta: DeltaVector,
    /// `Δ` with `ψ := −dp/dt` from the backward sweep.
    pub delta_from_p: DeltaVector,
    pub delta_discrepancy: f64,
    pub stationarity: StationarityReport,
}

/// Runs the state solve, both co-state routes and all residual checks.
pub fn verify_mp_ode(
    ode: &OdeProblemSpec,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
    tol: f64,
    stationarity_tol: f64,
) -> Result<OdeReport> {
    let lifted = lift_ode(ode);
    let x = solve_marching(&lifted, policy, mesh, tol)?;
    let ctx = SensitivityContext::new(&lifted, policy, &x, mesh, tol)?;
    let adj = AdjointState::new(&ctx, mesh);
    let delta = delta_vector(&ctx.lin, &adj, mesh);

    let p_psi = costate_p_from_psi(&adj.costate.psi, ode, policy, &x, mesh);
    let p_back = solve_costate_backward(ode, policy, &x, mesh)?;
    let route_discrepancy = p_psi.p.sup_distance(&p_back.p);

    let psi_from_p: Vec<Vector> = (0..mesh.n_nodes())
        .map(|q| {
            let (t, xq, a) = (mesh.node_time(q), &x.values[q], policy.at_node(mesh, q));
            (ode.f_x)(t, xq, a).tr_mul(&p_back.p.values[q]) - (ode.running_x)(t, xq, a)
        })
        .collect();
    let multipliers = psi_from_p.iter().enumerate().map(|(q, v)| v * mesh.weight(q)).collect();
    let adj_p = AdjointState {
        xi: adj.xi.clone(),
        costate: CostateField { psi: PiecewiseTrajectory::new(ode.n, psi_from_p), multipliers },
    };
    let delta_from_p = delta_vector(&ctx.lin, &adj_p, mesh);
    let delta_discrepancy = delta.iter().zip(&delta_from_p).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    let stationarity = check_stationarity(&delta_from_p, policy, stationarity_tol);

    Ok(OdeReport {
        route_discrepancy,
        from_psi: costate_residuals(ode, policy, &x, &p_psi, mesh),
        backward: costate_residuals(ode, policy, &x, &p_back, mesh),
        state: state_residuals(ode, policy, &x, mesh),
        delta,
        delta_from_p,
        delta_discrepancy,
        stationarity,
    })
}
