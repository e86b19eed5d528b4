//! First-order sensitivity of the state and cost to a control variation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{resolvent_kernel, ImpulseKernels, KernelGrid, ResolventGrid};
use crate::linear::{
    apply_resolvent, combined_forcing, combined_kernel, path_boundary_values, solve_linear, LinearMode, LinearSystem,
    PathSumTable,
};
use crate::mesh::TimeMesh;
use crate::model::{ControlPolicy, ControlVariation, PiecewiseTrajectory, ProblemSpec, Vector};

/// All partial derivatives sampled along a state trajectory.
///
/// Impulse partials at impulse `i` are evaluated at
/// `(s, τ_i, x(τ_i⁻), a_i, a_{i+1})`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub n: usize,
    pub m: usize,
    pub f_x: KernelGrid,
    pub f_u: KernelGrid,
    pub jump_x: ImpulseKernels,
    pub jump_a: ImpulseKernels,
    pub jump_b: ImpulseKernels,
    pub running_x: Vec<Vector>,
    pub running_u: Vec<Vector>,
    /// `φ_{x_i}`, `i = 1..=N+1`.
    pub terminal_x: Vec<Vector>,
    /// `φ_{a_i}`, `i = 1..=N+1`.
    pub terminal_a: Vec<Vector>,
    /// Path sums of `G_x` up to `i = N+1`.
    pub table: PathSumTable,
}

impl Linearization {
    pub fn new(
        problem: &ProblemSpec,
        policy: &ControlPolicy,
        x: &PiecewiseTrajectory,
        mesh: &TimeMesh,
    ) -> Result<Self> {
        policy.check_mesh(mesh)?;
        let (n, m) = (problem.n, problem.m);
        let (fx_fn, fu_fn) = (problem.f_x()?, problem.f_u()?);
        let (gx_fn, ga_fn, gb_fn) = (problem.jump_x()?, problem.jump_a()?, problem.jump_b()?);
        let (cx_fn, cu_fn) = (problem.running_x()?, problem.running_u()?);
        let t = |p: usize| mesh.node_time(p);
        let u = |p: usize| policy.at_node(mesh, p);
        let f_x = KernelGrid::from_fn(mesh, n, n, |p, q| fx_fn(t(p), t(q), &x.values[q], u(q)));
        let f_u = KernelGrid::from_fn(mesh, n, m, |p, q| fu_fn(t(p), t(q), &x.values[q], u(q)));
        let jump_args = |i: usize| (mesh.tau(i), x.left_limit(mesh, i), &policy.values[i - 1], &policy.values[i]);
        let jump_x = ImpulseKernels::from_fn(mesh, n, n, |i, p| {
            let (tau, xm, a, b) = jump_args(i);
            gx_fn(t(p), tau, xm, a, b)
        });
        let jump_a = ImpulseKernels::from_fn(mesh, n, m, |i, p| {
            let (tau, xm, a, b) = jump_args(i);
            ga_fn(t(p), tau, xm, a, b)
        });
        let jump_b = ImpulseKernels::from_fn(mesh, n, m, |i, p| {
            let (tau, xm, a, b) = jump_args(i);
            gb_fn(t(p), tau, xm, a, b)
        });
        let running_x = (0..mesh.n_nodes()).map(|p| cx_fn(t(p), &x.values[p], u(p))).collect();
        let running_u = (0..mesh.n_nodes()).map(|p| cu_fn(t(p), &x.values[p], u(p))).collect();
        let lefts = x.left_limits(mesh);
        let terminal_x = problem.terminal_x()?(&lefts, &policy.values);
        let terminal_a = problem.terminal_a()?(&lefts, &policy.values);
        let table = PathSumTable::build(n, mesh.n_intervals(), |i, k| jump_x.get(k, mesh.left_limit_node(i)));
        Ok(Self { n, m, f_x, f_u, jump_x, jump_a, jump_b, running_x, running_u, terminal_x, terminal_a, table })
    }

    /// The linear system with kernel `f_x`, impulse kernels `G_x` and the given forcing.
    pub fn linear_system(&self, forcing: PiecewiseTrajectory) -> LinearSystem {
        LinearSystem { n: self.n, kernel: self.f_x.clone(), impulses: self.jump_x.clone(), forcing }
    }

    /// Forcing `η` of the variational equation for the variation `α`.
    pub fn variational_forcing(&self, alpha: &ControlVariation, mesh: &TimeMesh) -> Result<PiecewiseTrajectory> {
        check_variation(alpha, mesh, self.m)?;
        let n = self.n;
        let m = self.m;
        let values = (0..mesh.n_nodes())
            .map(|p| {
                let mut v = Vector::zeros(n);
                for q in 0..=p {
                    let w = mesh.weight_to(p, q);
                    if w != 0.0 {
                        let block = self.f_u.block(p, q);
                        let a = &alpha[mesh.interval_of(q)];
                        for r in 0..n {
                            let mut acc = 0.0;
                            for c in 0..m {
                                acc += block[r * m + c] * a[c];
                            }
                            v[r] += w * acc;
                        }
                    }
                }
                for i in 1..=mesh.active_impulses(p) {
                    v += self.jump_a.get(i, p) * &alpha[i - 1] + self.jump_b.get(i, p) * &alpha[i];
                }
                v
            })
            .collect();
        Ok(PiecewiseTrajectory::new(n, values))
    }
}

pub(crate) fn check_variation(alpha: &ControlVariation, mesh: &TimeMesh, m: usize) -> Result<()> {
    if alpha.len() != mesh.n_intervals() || alpha.iter().any(|a| a.len() != m) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "variation needs {} vectors of length {m}",
            mesh.n_intervals()
        )));
    }
    Ok(())
}

/// Variational equation `δx = η + ∫ f_x δx + Σ G_x δx(τ_i⁻)` for one `α`.
#[derive(Debug, Clone)]
pub struct VariationalSystem {
    pub linear: LinearSystem,
    pub alpha: ControlVariation,
}

pub fn build_variational(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    alpha: &ControlVariation,
    mesh: &TimeMesh,
) -> Result<VariationalSystem> {
    let lin = Linearization::new(problem, policy, x, mesh)?;
    let eta = lin.variational_forcing(alpha, mesh)?;
    Ok(VariationalSystem { linear: lin.linear_system(eta), alpha: alpha.clone() })
}

/// `δx` on the mesh plus its left limits from the path-sum boundary formula.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaX {
    pub trajectory: PiecewiseTrajectory,
    /// `δx(τ_i⁻)`, `i = 1..=N+1`.
    pub boundary: Vec<Vector>,
}

pub fn delta_x(sys: &VariationalSystem, mesh: &TimeMesh, mode: LinearMode, tol: f64) -> Result<DeltaX> {
    let trajectory = solve_linear(&sys.linear, mesh, mode, tol)?;
    let table = sys.linear.path_table(mesh, mesh.n_intervals());
    let boundary = path_boundary_values(&sys.linear, &table, &trajectory, mesh);
    Ok(DeltaX { trajectory, boundary })
}

/// `δJ = ∫ (g_x δx + g_u δu) + Σ φ_{x_i} δx(τ_i⁻) + Σ φ_{a_i} α_i`.
pub fn delta_j_direct(
    problem: &ProblemSpec,
    policy: &ControlPolicy,
    x: &PiecewiseTrajectory,
    alpha: &ControlVariation,
    dx: &DeltaX,
    mesh: &TimeMesh,
) -> Result<f64> {
    check_variation(alpha, mesh, problem.m)?;
    let (cx, cu) = (problem.running_x()?, problem.running_u()?);
    let mut total = 0.0;
    for p in 0..mesh.n_nodes() {
        let (t, a) = (mesh.node_time(p), policy.at_node(mesh, p));
        let integrand = cx(t, &x.values[p], a).dot(&dx.trajectory.values[p])
            + cu(t, &x.values[p], a).dot(&alpha[mesh.interval_of(p)]);
        total += mesh.weight(p) * integrand;
    }
    let lefts = x.left_limits(mesh);
    let phi_x = problem.terminal_x()?(&lefts, &policy.values);
    let phi_a = problem.terminal_a()?(&lefts, &policy.values);
    for i in 0..mesh.n_intervals() {
        total += phi_x[i].dot(&dx.boundary[i]) + phi_a[i].dot(&alpha[i]);
    }
    Ok(total)
}

/// A linearization with the resolvent of its combined kernel, reused across
/// variations and by the adjoint.
#[derive(Debug, Clone)]
pub struct SensitivityContext {
    pub lin: Linearization,
    pub resolvent: ResolventGrid,
}

impl SensitivityContext {
    pub fn new(
        problem: &ProblemSpec,
        policy: &ControlPolicy,
        x: &PiecewiseTrajectory,
        mesh: &TimeMesh,
        tol: f64,
    ) -> Result<Self> {
        let lin = Linearization::new(problem, policy, x, mesh)?;
        let sys = lin.linear_system(PiecewiseTrajectory::zeros(lin.n, mesh));
        let k = combined_kernel(&sys, &lin.table, mesh);
        let resolvent = resolvent_kernel(&k, mesh, tol);
        Ok(Self { lin, resolvent })
    }

    /// `δx` for `α` in resolvent form, with boundary values.
    pub fn delta_x(&self, alpha: &ControlVariation, mesh: &TimeMesh) -> Result<DeltaX> {
        let eta = self.lin.variational_forcing(alpha, mesh)?;
        let sys = self.lin.linear_system(eta);
        let bold = combined_forcing(&sys, &self.lin.table, mesh);
        let trajectory = apply_resolvent(&self.resolvent, &bold, mesh);
        let boundary = path_boundary_values(&sys, &self.lin.table, &trajectory, mesh);
        Ok(DeltaX { trajectory, boundary })
    }
}
