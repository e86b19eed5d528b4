//! Problem definitions, control policies, trajectories and the cost functional.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mesh::{Side, TimeMesh};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// `h(s)`.
pub type ForcingFn = Box<dyn Fn(f64) -> Vector + Send + Sync>;
/// `f(s, t, x, a)`.
pub type KernelFn = Box<dyn Fn(f64, f64, &Vector, &Vector) -> Vector + Send + Sync>;
/// A partial of `f(s, t, x, a)` in `x` or `a`.
pub type KernelJacFn = Box<dyn Fn(f64, f64, &Vector, &Vector) -> Matrix + Send + Sync>;
/// `G(s, τ, x, a, b)`.
pub type JumpFn = Box<dyn Fn(f64, f64, &Vector, &Vector, &Vector) -> Vector + Send + Sync>;
/// A partial of `G(s, τ, x, a, b)` in `x`, `a` or `b`.
pub type JumpJacFn = Box<dyn Fn(f64, f64, &Vector, &Vector, &Vector) -> Matrix + Send + Sync>;
/// `g(t, x, a)`.
pub type RunningFn = Box<dyn Fn(f64, &Vector, &Vector) -> f64 + Send + Sync>;
/// Gradient of `g(t, x, a)` in `x` or `a`.
pub type RunningGradFn = Box<dyn Fn(f64, &Vector, &Vector) -> Vector + Send + Sync>;
/// `φ(x(τ_1⁻), …, x(τ_{N+1}⁻), a_1, …, a_{N+1})`.
pub type TerminalFn = Box<dyn Fn(&[Vector], &[Vector]) -> f64 + Send + Sync>;
/// Gradients of `φ`, one vector per slot.
pub type TerminalGradFn = Box<dyn Fn(&[Vector], &[Vector]) -> Vec<Vector> + Send + Sync>;

/// Compact box `[lo, hi]` in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ControlBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidBox(format!("lo has {} entries, hi has {}", lo.len(), hi.len())));
        }
        if let Some(j) = (0..lo.len()).find(|&j| !(lo[j] <= hi[j])) {
            return Err(Error::InvalidBox(format!("component {j} has lo > hi")));
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(m: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; m], hi: vec![hi; m] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, a: &Vector) -> bool {
        a.len() == self.dim() && a.iter().enumerate().all(|(j, &v)| v >= self.lo[j] && v <= self.hi[j])
    }

    pub fn project(&self, a: &Vector) -> Vector {
        Vector::from_iterator(a.len(), a.iter().enumerate().map(|(j, &v)| v.clamp(self.lo[j], self.hi[j])))
    }
}

/// Piecewise-constant control: `values[k]` acts on interval `k`, i.e. `a_{k+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPolicy {
    pub values: Vec<Vector>,
    pub bounds: ControlBox,
}

/// Control perturbation `α = (α_1, …, α_{N+1})`.
pub type ControlVariation = Vec<Vector>;

impl ControlPolicy {
    pub fn new(values: Vec<Vector>, bounds: ControlBox) -> Result<Self> {
        for (k, a) in values.iter().enumerate() {
            if a.len() != bounds.dim() {
                return Err(Error::DimensionMismatch(format!("control {k} has length {}", a.len())));
            }
            if !bounds.contains(a) {
                return Err(Error::InvalidBox(format!("control {k} lies outside the box")));
            }
        }
        Ok(Self { values, bounds })
    }

    /// Same box, new values; values are not required to lie in the box.
    pub fn with_values(&self, values: Vec<Vector>) -> Self {
        Self { values, bounds: self.bounds.clone() }
    }

    pub fn constant(mesh: &TimeMesh, a: Vector, bounds: ControlBox) -> Result<Self> {
        Self::new(vec![a; mesh.n_intervals()], bounds)
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn check_mesh(&self, mesh: &TimeMesh) -> Result<()> {
        if self.values.len() != mesh.n_intervals() {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} values, mesh has {} intervals",
                self.values.len(),
                mesh.n_intervals()
            )));
        }
        Ok(())
    }

    /// `a + ε α`.
    pub fn perturbed(&self, alpha: &ControlVariation, eps: f64) -> Self {
        self.with_values(self.values.iter().zip(alpha).map(|(a, d)| a + d * eps).collect())
    }

    /// Control value used at node `p` (the interval's own value, also at both ends).
    pub fn at_node(&self, mesh: &TimeMesh, p: usize) -> &Vector {
        &self.values[mesh.interval_of(p)]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|a| a.iter().copied()).collect()
    }
}

/// `u(t)`, with `side` selecting `a_i` or `a_{i+1}` at `t = τ_i`.
pub fn control_at<'a>(policy: &'a ControlPolicy, mesh: &TimeMesh, t: f64, side: Side) -> Result<&'a Vector> {
    if !(t >= 0.0 && t <= mesh.horizon()) {
        return Err(Error::TimeOutOfRange(t));
    }
    policy.check_mesh(mesh)?;
    let taus = mesh.switching_times();
    let passed = match side {
        Side::Left => taus.iter().filter(|&&tau| tau < t).count(),
        Side::Right => taus.iter().filter(|&&tau| tau <= t).count(),
    };
    Ok(&policy.values[passed])
}

/// Nodal values on a [`TimeMesh`], one vector per global node.
///
/// Co-states are stored the same way and read as row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    pub dim: usize,
    pub values: Vec<Vector>,
}

impl PiecewiseTrajectory {
    pub fn new(dim: usize, values: Vec<Vector>) -> Self {
        Self { dim, values }
    }

    pub fn zeros(dim: usize, mesh: &TimeMesh) -> Self {
        Self { dim, values: vec![Vector::zeros(dim); mesh.n_nodes()] }
    }

    pub fn from_fn(dim: usize, mesh: &TimeMesh, mut f: impl FnMut(usize, f64) -> Vector) -> Self {
        Self { dim, values: (0..mesh.n_nodes()).map(|p| f(p, mesh.node_time(p))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `x(τ_i⁻)` for `i = 1..=N+1`.
    pub fn left_limit(&self, mesh: &TimeMesh, i: usize) -> &Vector {
        &self.values[mesh.left_limit_node(i)]
    }

    /// `x(τ_i⁺)` for `i = 1..=N`.
    pub fn right_limit(&self, mesh: &TimeMesh, i: usize) -> &Vector {
        &self.values[mesh.right_limit_node(i)]
    }

    /// `x(τ_1⁻), …, x(τ_{N+1}⁻)`.
    pub fn left_limits(&self, mesh: &TimeMesh) -> Vec<Vector> {
        (1..=mesh.n_intervals()).map(|i| self.left_limit(mesh, i).clone()).collect()
    }

    pub fn interval_values<'a>(&'a self, mesh: &TimeMesh, k: usize) -> &'a [Vector] {
        &self.values[mesh.interval_nodes(k)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Partial-derivative callables. Gradient operations fail with
/// [`Error::MissingDerivative`] when a needed entry is absent.
#[derive(Default)]
pub struct Derivatives {
    pub f_x: Option<KernelJacFn>,
    pub f_u: Option<KernelJacFn>,
    pub jump_x: Option<JumpJacFn>,
    pub jump_a: Option<JumpJacFn>,
    pub jump_b: Option<JumpJacFn>,
    pub running_x: Option<RunningGradFn>,
    pub running_u: Option<RunningGradFn>,
    pub terminal_x: Option<TerminalGradFn>,
    pub terminal_a: Option<TerminalGradFn>,
}

/// An impulsive Volterra control problem.
///
/// State: `x(s) = h(s) + ∫_0^s f(s,t,x(t),u(t)) dt + Σ_{τ_i<s} G(s,τ_i,x(τ_i⁻),a_i,a_{i+1})`.
/// Cost: `J = ∫_0^T g(t,x,u) dt + φ(x(τ_1⁻),…,x(τ_{N+1}⁻),a_1,…,a_{N+1})`.
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub h: ForcingFn,
    pub f: KernelFn,
    pub jump: JumpFn,
    pub running: RunningFn,
    pub terminal: TerminalFn,
    pub derivatives: Derivatives,
    /// Lipschitz constant of `f` in `x`.
    pub lipschitz_f: f64,
    /// Lipschitz constant of `G` in `x`.
    pub lipschitz_g: f64,
}

impl core::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// A problem with `f = G = g = φ = 0`, all partials zero, and forcing `h`.
    pub fn new(name: impl Into<String>, n: usize, m: usize, h: ForcingFn) -> Self {
        Self {
            name: name.into(),
            n,
            m,
            h,
            f: Box::new(move |_, _, _, _| Vector::zeros(n)),
            jump: Box::new(move |_, _, _, _, _| Vector::zeros(n)),
            running: Box::new(|_, _, _| 0.0),
            terminal: Box::new(|_, _| 0.0),
            derivatives: Derivatives {
                f_x: Some(Box::new(move |_, _, _, _| Matrix::zeros(n, n))),
                f_u: Some(Box::new(move |_, _, _, _| Matrix::zeros(n, m))),
                jump_x: Some(Box::new(move |_, _, _, _, _| Matrix::zeros(n, n))),
                jump_a: Some(Box::new(move |_, _, _, _, _| Matrix::zeros(n, m))),
                jump_b: Some(Box::new(move |_, _, _, _, _| Matrix::zeros(n, m))),
                running_x: Some(Box::new(move |_, _, _| Vector::zeros(n))),
                running_u: Some(Box::new(move |_, _, _| Vector::zeros(m))),
                terminal_x: Some(Box::new(move |xs, _| vec![Vector::zeros(n); xs.len()])),
                terminal_a: Some(Box::new(move |_, us| vec![Vector::zeros(m); us.len()])),
            },
            lipschitz_f: 0.0,
            lipschitz_g: 0.0,
        }
    }

    pub fn with_kernel(mut self, f: KernelFn, f_x: KernelJacFn, f_u: KernelJacFn) -> Self {
        self.f = f;
        self.derivatives.f_x = Some(f_x);
        self.derivatives.f_u = Some(f_u);
        self
    }

    pub fn with_jump(mut self, jump: JumpFn, jump_x: JumpJacFn, jump_a: JumpJacFn, jump_b: JumpJacFn) -> Self {
        self.jump = jump;
        self.derivatives.jump_x = Some(jump_x);
        self.derivatives.jump_a = Some(jump_a);
        self.derivatives.jump_b = Some(jump_b);
        self
    }

    pub fn with_running(mut self, g: RunningFn, g_x: RunningGradFn, g_u: RunningGradFn) -> Self {
        self.running = g;
        self.derivatives.running_x = Some(g_x);
        self.derivatives.running_u = Some(g_u);
        self
    }

    pub fn with_terminal(mut self, phi: TerminalFn, phi_x: TerminalGradFn, phi_a: TerminalGradFn) -> Self {
        self.terminal = phi;
        self.derivatives.terminal_x = Some(phi_x);
        self.derivatives.terminal_a = Some(phi_a);
        self
    }

    pub fn with_lipschitz(mut self, c_f: f64, c_g: f64) -> Self {
        self.lipschitz_f = c_f;
        self.lipschitz_g = c_g;
        self
    }

    pub fn f_x(&self) -> Result<&KernelJacFn> {
        self.derivatives.f_x.as_ref().ok_or(Error::MissingDerivative("f_x"))
    }
    pub fn f_u(&self) -> Result<&KernelJacFn> {
        self.derivatives.f_u.as_ref().ok_or(Error::MissingDerivative("f_u"))
    }
    pub fn jump_x(&self) -> Result<&JumpJacFn> {
        self.derivatives.jump_x.as_ref().ok_or(Error::MissingDerivative("G_x"))
    }
    pub fn jump_a(&self) -> Result<&JumpJacFn> {
        self.derivatives.jump_a.as_ref().ok_or(Error::MissingDerivative("G_a"))
    }
    pub fn jump_b(&self) -> Result<&JumpJacFn> {
        self.derivatives.jump_b.as_ref().ok_or(Error::MissingDerivative("G_b"))
    }
    pub fn running_x(&self) -> Result<&RunningGradFn> {
        self.derivatives.running_x.as_ref().ok_or(Error::MissingDerivative("g_x"))
    }
    pub fn running_u(&self) -> Result<&RunningGradFn> {
        self.derivatives.running_u.as_ref().ok_or(Error::MissingDerivative("g_u"))
    }
    pub fn terminal_x(&self) -> Result<&TerminalGradFn> {
        self.derivatives.terminal_x.as_ref().ok_or(Error::MissingDerivative("phi_x"))
    }
    pub fn terminal_a(&self) -> Result<&TerminalGradFn> {
        self.derivatives.terminal_a.as_ref().ok_or(Error::MissingDerivative("phi_a"))
    }

    /// `G(s, τ_i, x(τ_i⁻), a_i, a_{i+1})` for impulse `i` (1-based).
    pub fn jump_at(&self, s: f64, mesh: &TimeMesh, i: usize, x_minus: &Vector, policy: &ControlPolicy) -> Vector {
        (self.jump)(s, mesh.tau(i), x_minus, &policy.values[i - 1], &policy.values[i])
    }
}

/// `J` by interval-aligned trapezoid quadrature plus `φ` at the left limits.
pub fn eval_cost(
    problem: &ProblemSpec,
    x: &PiecewiseTrajectory,
    policy: &ControlPolicy,
    mesh: &TimeMesh,
) -> Result<f64> {
    policy.check_mesh(mesh)?;
    if x.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!("trajectory has {} nodes, mesh has {}", x.len(), mesh.n_nodes())));
    }
    let mut integral = 0.0;
    for p in 0..mesh.n_nodes() {
        let w = mesh.weight(p);
        if w == 0.0 {
            continue;
        }
        let g = (problem.running)(mesh.node_time(p), &x.values[p], policy.at_node(mesh, p));
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("running cost at t = {}", mesh.node_time(p))));
        }
        integral += w * g;
    }
    let phi = (problem.terminal)(&x.left_limits(mesh), &policy.values);
    if !phi.is_finite() {
        return Err(Error::NonFinite("terminal cost".into()));
    }
    Ok(integral + phi)
}

/// Largest deviation between each supplied partial and its central difference.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub entries: Vec<(&'static str, f64)>,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

fn central_jacobian(dim_out: usize, x: &Vector, step: f64, mut f: impl FnMut(&Vector) -> Vector) -> Matrix {
    let mut jac = Matrix::zeros(dim_out, x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (f(&xp) - f(&xm)) / (2.0 * step);
        jac.set_column(j, &col);
    }
    jac
}

fn random_in_box<R: Rng + ?Sized>(rng: &mut R, bounds: &ControlBox) -> Vector {
    Vector::from_iterator(
        bounds.dim(),
        (0..bounds.dim()).map(|j| {
            let (lo, hi) = (bounds.lo[j], bounds.hi[j]);
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..=hi)
            }
        }),
    )
}

fn random_state<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.5..=1.5)))
}

/// Compares every supplied partial against central differences of the base
/// callables at `probes` random points drawn from `rng`.
pub fn validate_derivatives<R: Rng + ?Sized>(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    bounds: &ControlBox,
    rng: &mut R,
    probes: usize,
    step: f64,
) -> Result<DerivativeReport> {
    let n = problem.n;
    let horizon = mesh.horizon();
    let n_int = mesh.n_intervals();
    let mut worst = [0.0f64; 9];
    let names = ["f_x", "f_u", "G_x", "G_a", "G_b", "g_x", "g_u", "phi_x", "phi_a"];
    let mut bump = |k: usize, e: f64| worst[k] = worst[k].max(e);
    for _ in 0..probes {
        let s = rng.gen_range(0.0..=horizon);
        let t = rng.gen_range(0.0..=s.max(f64::MIN_POSITIVE));
        let x = random_state(rng, n);
        let a = random_in_box(rng, bounds);
        let b = random_in_box(rng, bounds);

        let fx = central_jacobian(n, &x, step, |y| (problem.f)(s, t, y, &a));
        bump(0, (problem.f_x()?(s, t, &x, &a) - fx).amax());
        let fu = central_jacobian(n, &a, step, |v| (problem.f)(s, t, &x, v));
        bump(1, (problem.f_u()?(s, t, &x, &a) - fu).amax());

        let gx = central_jacobian(n, &x, step, |y| (problem.jump)(s, t, y, &a, &b));
        bump(2, (problem.jump_x()?(s, t, &x, &a, &b) - gx).amax());
        let ga = central_jacobian(n, &a, step, |v| (problem.jump)(s, t, &x, v, &b));
        bump(3, (problem.jump_a()?(s, t, &x, &a, &b) - ga).amax());
        let gb = central_jacobian(n, &b, step, |v| (problem.jump)(s, t, &x, &a, v));
        bump(4, (problem.jump_b()?(s, t, &x, &a, &b) - gb).amax());

        let cx = central_jacobian(1, &x, step, |y| Vector::from_element(1, (problem.running)(t, y, &a)));
        bump(5, (problem.running_x()?(t, &x, &a) - cx.row(0).transpose()).amax());
        let cu = central_jacobian(1, &a, step, |v| Vector::from_element(1, (problem.running)(t, &x, v)));
        bump(6, (problem.running_u()?(t, &x, &a) - cu.row(0).transpose()).amax());

        let xs: Vec<Vector> = (0..n_int).map(|_| random_state(rng, n)).collect();
        let us: Vec<Vector> = (0..n_int).map(|_| random_in_box(rng, bounds)).collect();
        let phi_x = problem.terminal_x()?(&xs, &us);
        let phi_a = problem.terminal_a()?(&xs, &us);
        for i in 0..n_int {
            let fd = central_jacobian(1, &xs[i], step, |y| {
                let mut z = xs.clone();
                z[i] = y.clone();
                Vector::from_element(1, (problem.terminal)(&z, &us))
            });
            bump(7, (&phi_x[i] - fd.row(0).transpose()).amax());
            let fd = central_jacobian(1, &us[i], step, |v| {
                let mut z = us.clone();
                z[i] = v.clone();
                Vector::from_element(1, (problem.terminal)(&xs, &z))
            });
            bump(8, (&phi_a[i] - fd.row(0).transpose()).amax());
        }
    }
    Ok(DerivativeReport { entries: names.iter().copied().zip(worst).collect() })
}
