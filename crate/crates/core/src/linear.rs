//! Linear impulsive Volterra equations
//! `x(s) = h(s) + ∫_0^s K(s,t)x(t)dt + Σ_{τ_i<s} L(s,τ_i)x(τ_i⁻)`:
//! increasing-path sums, the combined kernel, three solution modes, and the
//! backward dual equation.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{resolvent_kernel, ImpulseKernels, KernelGrid, ResolventGrid};
use crate::mesh::TimeMesh;
use crate::model::{Matrix, PiecewiseTrajectory, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub n: usize,
    pub kernel: KernelGrid,
    pub impulses: ImpulseKernels,
    pub forcing: PiecewiseTrajectory,
}

impl LinearSystem {
    pub fn new(kernel: KernelGrid, impulses: ImpulseKernels, forcing: PiecewiseTrajectory) -> Result<Self> {
        let n = forcing.dim;
        if kernel.rows() != n || kernel.cols() != n || impulses.rows() != n || impulses.cols() != n {
            return Err(Error::DimensionMismatch("kernel blocks must be n×n".into()));
        }
        if kernel.n_nodes() != forcing.len() {
            return Err(Error::DimensionMismatch("kernel and forcing meshes differ".into()));
        }
        Ok(Self { n, kernel, impulses, forcing })
    }

    /// Builds the grids from callables `K(s,t)`, `L(i, s)` and `h(s)`.
    pub fn from_fns(
        mesh: &TimeMesh,
        n: usize,
        k: impl Fn(f64, f64) -> Matrix,
        l: impl Fn(usize, f64) -> Matrix,
        h: impl Fn(f64) -> Vector,
    ) -> Self {
        let kernel = KernelGrid::from_fn(mesh, n, n, |p, q| k(mesh.node_time(p), mesh.node_time(q)));
        let impulses = ImpulseKernels::from_fn(mesh, n, n, |i, p| l(i, mesh.node_time(p)));
        let forcing = PiecewiseTrajectory::from_fn(n, mesh, |_, s| h(s));
        Self { n, kernel, impulses, forcing }
    }

    pub fn with_forcing(&self, forcing: PiecewiseTrajectory) -> Self {
        Self { forcing, ..self.clone() }
    }

    /// `L(τ_i, τ_k)` for `k < i ≤ N+1`, read at the left-limit node of `τ_i`.
    pub fn impulse_between(&self, mesh: &TimeMesh, i: usize, k: usize) -> Matrix {
        self.impulses.get(k, mesh.left_limit_node(i))
    }

    /// Path sums `M(j, i)` for `1 ≤ j ≤ i ≤ i_max`.
    pub fn path_table(&self, mesh: &TimeMesh, i_max: usize) -> PathSumTable {
        PathSumTable::build(self.n, i_max, |i, k| self.impulse_between(mesh, i, k))
    }
}

/// Strictly increasing index sequence `j = k_0 < k_1 < … < k_α < k_{α+1} = i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncreasingPath {
    pub indices: Vec<usize>,
}

const MAX_PATH_SPAN: usize = 20;

/// All increasing paths from `j` to `i`: `2^{i−j−1}` of them for `i > j`, the
/// singleton `{i}` for `i = j`, none for `i < j`.
pub fn enumerate_paths(j: usize, i: usize) -> Result<Vec<IncreasingPath>> {
    if i < j {
        return Ok(Vec::new());
    }
    if i == j {
        return Ok(vec![IncreasingPath { indices: vec![i] }]);
    }
    let span = i - j;
    if span > MAX_PATH_SPAN {
        return Err(Error::PathEnumerationTooLarge { j, i });
    }
    let inner = span - 1;
    Ok((0u32..(1u32 << inner))
        .map(|mask| {
            let mut indices = vec![j];
            indices.extend((0..inner).filter(|b| mask & (1 << b) != 0).map(|b| j + 1 + b));
            indices.push(i);
            IncreasingPath { indices }
        })
        .collect())
}

/// Ordered product `L(τ_i, τ_{k_α}) ⋯ L(τ_{k_1}, τ_j)` along `path`, with
/// `l(a, b) = L(τ_a, τ_b)`.
pub fn path_weight(n: usize, path: &IncreasingPath, l: impl Fn(usize, usize) -> Matrix) -> Matrix {
    let mut w = Matrix::identity(n, n);
    for pair in path.indices.windows(2) {
        w = l(pair[1], pair[0]) * w;
    }
    w
}

/// `M(j, i) = Σ_{σ ∈ P(j,i)} Λ(σ)` from the recursion
/// `M(i,i) = I`, `M(j,i) = Σ_{k=j}^{i−1} L(τ_i, τ_k) M(j,k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSumTable {
    n: usize,
    i_max: usize,
    entries: Vec<Matrix>,
}

fn table_index(j: usize, i: usize) -> usize {
    (i - 1) * i / 2 + (j - 1)
}

impl PathSumTable {
    pub fn build(n: usize, i_max: usize, l: impl Fn(usize, usize) -> Matrix) -> Self {
        let mut entries: Vec<Matrix> = Vec::with_capacity(i_max * (i_max + 1) / 2);
        for i in 1..=i_max {
            let row: Vec<Matrix> = (1..i).map(|k| l(i, k)).collect();
            for j in 1..=i {
                let m = if j == i {
                    Matrix::identity(n, n)
                } else {
                    let mut acc = Matrix::zeros(n, n);
                    for k in j..i {
                        acc += &row[k - 1] * &entries[table_index(j, k)];
                    }
                    acc
                };
                entries.push(m);
            }
        }
        Self { n, i_max, entries }
    }

    pub fn i_max(&self) -> usize {
        self.i_max
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `M(j, i)`; zero when `i < j`.
    pub fn get(&self, j: usize, i: usize) -> Matrix {
        if i < j {
            return Matrix::zeros(self.n, self.n);
        }
        self.entries[table_index(j, i)].clone()
    }

    pub fn entry(&self, j: usize, i: usize) -> &Matrix {
        &self.entries[table_index(j, i)]
    }
}

/// Alias for [`PathSumTable::build`].
pub fn path_sum_table(n: usize, i_max: usize, l: impl Fn(usize, usize) -> Matrix) -> PathSumTable {
    PathSumTable::build(n, i_max, l)
}

/// `Q_i(q) = Σ_{j≤i} M(j,i) K(τ_j⁻, t_q)` for `q` up to the left-limit node of `τ_i`.
fn boundary_kernel_sums(sys: &LinearSystem, table: &PathSumTable, mesh: &TimeMesh) -> Vec<Vec<Matrix>> {
    let n = sys.n;
    (1..=mesh.n_impulses())
        .map(|i| {
            let e_i = mesh.left_limit_node(i);
            (0..=e_i)
                .map(|q| {
                    let mut acc = Matrix::zeros(n, n);
                    for j in 1..=i {
                        let e_j = mesh.left_limit_node(j);
                        if q <= e_j {
                            acc += table.entry(j, i) * sys.kernel.get(e_j, q);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// The combined kernel `K(s,t) + Σ_{τ_i<s} Σ_{j≤i} L(s,τ_i) M(j,i) K(τ_j,t)`.
pub fn combined_kernel(sys: &LinearSystem, table: &PathSumTable, mesh: &TimeMesh) -> KernelGrid {
    let n = sys.n;
    let q_sums = boundary_kernel_sums(sys, table, mesh);
    let mut out = sys.kernel.clone();
    for p in 0..mesh.n_nodes() {
        for i in 1..=mesh.active_impulses(p) {
            let l = sys.impulses.get(i, p);
            for (q, qm) in q_sums[i - 1].iter().enumerate() {
                let add = &l * qm;
                let block = out.block_mut(p, q);
                for r in 0..n {
                    for c in 0..n {
                        block[r * n + c] += add[(r, c)];
                    }
                }
            }
        }
    }
    out
}

/// The combined forcing `h(s) + Σ_{τ_i<s} Σ_{j≤i} L(s,τ_i) M(j,i) h(τ_j⁻)`.
pub fn combined_forcing(sys: &LinearSystem, table: &PathSumTable, mesh: &TimeMesh) -> PiecewiseTrajectory {
    let n = sys.n;
    let boundary: Vec<Vector> = (1..=mesh.n_impulses())
        .map(|i| {
            let mut acc = Vector::zeros(n);
            for j in 1..=i {
                acc += table.entry(j, i) * &sys.forcing.values[mesh.left_limit_node(j)];
            }
            acc
        })
        .collect();
    PiecewiseTrajectory::from_fn(n, mesh, |p, _| {
        let mut v = sys.forcing.values[p].clone();
        for i in 1..=mesh.active_impulses(p) {
            v += sys.impulses.get(i, p) * &boundary[i - 1];
        }
        v
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearMode {
    /// March the impulsive equation node by node.
    Direct,
    /// March interior nodes; take every left limit from the path-sum formula.
    PathBoundary,
    /// Fold impulses into the combined kernel and apply its resolvent.
    Resolvent,
}

/// `x = h + ∫_0^s R(s,t) h(t) dt` by trapezoid quadrature.
pub fn apply_resolvent(r: &ResolventGrid, forcing: &PiecewiseTrajectory, mesh: &TimeMesh) -> PiecewiseTrajectory {
    let n = forcing.dim;
    PiecewiseTrajectory::from_fn(n, mesh, |p, _| {
        let mut v = forcing.values[p].clone();
        let mut acc = Vector::zeros(n);
        for q in 0..=p {
            let w = mesh.weight_to(p, q);
            if w != 0.0 {
                acc.fill(0.0);
                r.kernel.apply(p, q, &forcing.values[q], &mut acc);
                v.axpy(w, &acc, 1.0);
            }
        }
        v
    })
}

fn solve_diagonal(sys: &LinearSystem, mesh: &TimeMesh, p: usize, rhs: Vector) -> Result<Vector> {
    let w = mesh.w_left(p);
    if w == 0.0 {
        return Ok(rhs);
    }
    let a = Matrix::identity(sys.n, sys.n) - sys.kernel.get(p, p) * w;
    a.lu().solve(&rhs).ok_or_else(|| Error::NonFinite(alloc::format!("singular trapezoid step at node {p}")))
}

/// Known part of the right-hand side at node `p`: forcing plus the
/// trapezoid sum over `q < p`.
fn known_part(sys: &LinearSystem, mesh: &TimeMesh, x: &[Vector], p: usize) -> Vector {
    let mut v = sys.forcing.values[p].clone();
    for (q, xq) in x.iter().enumerate().take(p) {
        let w = mesh.weight_to(p, q);
        if w != 0.0 {
            let mut acc = Vector::zeros(sys.n);
            sys.kernel.apply(p, q, xq, &mut acc);
            v.axpy(w, &acc, 1.0);
        }
    }
    v
}

fn march(sys: &LinearSystem, mesh: &TimeMesh, table: Option<&PathSumTable>) -> Result<PiecewiseTrajectory> {
    let n_nodes = mesh.n_nodes();
    let mut x: Vec<Vector> = Vec::with_capacity(n_nodes);
    // boundary aggregates h(τ_j⁻) + ∫_0^{τ_j} K(τ_j,t) x(t) dt
    let mut aggregates: Vec<Vector> = Vec::new();
    for p in 0..n_nodes {
        let known = known_part(sys, mesh, &x, p);
        let k = mesh.interval_of(p);
        let value = match table {
            Some(table) if mesh.is_last(p) => {
                let i = k + 1;
                let mut rhs = known.clone();
                for (j, b) in aggregates.iter().enumerate() {
                    rhs += table.entry(j + 1, i) * b;
                }
                let v = solve_diagonal(sys, mesh, p, rhs)?;
                let mut agg = Vector::zeros(sys.n);
                sys.kernel.apply(p, p, &v, &mut agg);
                aggregates.push(known + agg * mesh.w_left(p));
                v
            }
            _ => {
                let mut rhs = known;
                for i in 1..=k {
                    rhs += sys.impulses.get(i, p) * &x[mesh.left_limit_node(i)];
                }
                solve_diagonal(sys, mesh, p, rhs)?
            }
        };
        x.push(value);
    }
    Ok(PiecewiseTrajectory::new(sys.n, x))
}

/// Solves the linear system in the chosen mode. `tol` truncates the resolvent series.
pub fn solve_linear(sys: &LinearSystem, mesh: &TimeMesh, mode: LinearMode, tol: f64) -> Result<PiecewiseTrajectory> {
    match mode {
        LinearMode::Direct => march(sys, mesh, None),
        LinearMode::PathBoundary => {
            let table = sys.path_table(mesh, mesh.n_intervals());
            march(sys, mesh, Some(&table))
        }
        LinearMode::Resolvent => {
            let table = sys.path_table(mesh, mesh.n_impulses());
            let k = combined_kernel(sys, &table, mesh);
            let r = resolvent_kernel(&k, mesh, tol);
            Ok(apply_resolvent(&r, &combined_forcing(sys, &table, mesh), mesh))
        }
    }
}

/// `y(t) = η(t) + ∫_t^T η(s) R(s,t) ds` with row vectors `η`, `y`.
pub fn dual_solve(r: &ResolventGrid, eta: &PiecewiseTrajectory, mesh: &TimeMesh) -> PiecewiseTrajectory {
    let n = eta.dim;
    let n_nodes = mesh.n_nodes();
    let mut y = eta.values.clone();
    for p in 0..n_nodes {
        for q in 0..=p {
            let w = mesh.weight_from(q, p);
            if w != 0.0 {
                r.kernel.apply_left(p, q, &eta.values[p], w, &mut y[q]);
            }
        }
    }
    PiecewiseTrajectory::new(n, y)
}

/// `D_j = Σ_{i=j}^{N} (∫_{τ_i}^T y(s) L(s,τ_i) ds) M(j,i)` for `j = 1..=N`.
///
/// `weights[p]` is the quadrature weight attached to `y_p`.
pub(crate) fn impulse_dual_sums(
    impulses: &ImpulseKernels,
    table: &PathSumTable,
    mesh: &TimeMesh,
    y: &[Vector],
    weights: impl Fn(usize) -> f64,
) -> Vec<Vector> {
    let n = impulses.cols();
    let n_imp = mesh.n_impulses();
    let integrals: Vec<Vector> = (1..=n_imp)
        .map(|i| {
            let mut acc = Vector::zeros(n);
            for p in mesh.start_node(i)..mesh.n_nodes() {
                let w = weights(p);
                let block = impulses.block(i, p);
                for r in 0..impulses.rows() {
                    let f = w * y[p][r];
                    for c in 0..n {
                        acc[c] += f * block[r * n + c];
                    }
                }
            }
            acc
        })
        .collect();
    (1..=n_imp)
        .map(|j| {
            let mut acc = Vector::zeros(n);
            for i in j..=n_imp {
                acc += table.entry(j, i).tr_mul(&integrals[i - 1]);
            }
            acc
        })
        .collect()
}

/// Sup-norm defect of the backward equation
/// `y(t) − η(t) − ∫_t^T y K(s,t) ds − Σ_{j: t<τ_j} Σ_{i=j}^N (∫_{τ_i}^T y L(s,τ_i) ds) M(j,i) K(τ_j,t)`.
pub fn dual_residual(
    sys: &LinearSystem,
    table: &PathSumTable,
    y: &PiecewiseTrajectory,
    eta: &PiecewiseTrajectory,
    mesh: &TimeMesh,
) -> f64 {
    let n_nodes = mesh.n_nodes();
    let d = impulse_dual_sums(&sys.impulses, table, mesh, &y.values, |p| mesh.weight(p));
    let mut defect: Vec<Vector> = y.values.iter().zip(&eta.values).map(|(a, b)| a - b).collect();
    for p in 0..n_nodes {
        for q in 0..=p {
            let w = mesh.weight_from(q, p);
            if w != 0.0 {
                sys.kernel.apply_left(p, q, &y.values[p], -w, &mut defect[q]);
            }
        }
    }
    for (j, dj) in d.iter().enumerate() {
        let e_j = mesh.left_limit_node(j + 1);
        for (q, slot) in defect.iter_mut().enumerate().take(e_j + 1) {
            sys.kernel.apply_left(e_j, q, dj, -1.0, slot);
        }
    }
    defect.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

/// Left limits from the path-sum formula
/// `x(τ_i⁻) = Σ_{j≤i} M(j,i) [h(τ_j⁻) + ∫_0^{τ_j} K(τ_j,t) x(t) dt]`, `i = 1..=N+1`.
pub fn path_boundary_values(
    sys: &LinearSystem,
    table: &PathSumTable,
    x: &PiecewiseTrajectory,
    mesh: &TimeMesh,
) -> Vec<Vector> {
    let n = sys.n;
    let aggregates: Vec<Vector> = (1..=mesh.n_intervals())
        .map(|j| {
            let e_j = mesh.left_limit_node(j);
            let mut v = sys.forcing.values[e_j].clone();
            let mut acc = Vector::zeros(n);
            for q in 0..=e_j {
                let w = mesh.weight_to(e_j, q);
                if w != 0.0 {
                    acc.fill(0.0);
                    sys.kernel.apply(e_j, q, &x.values[q], &mut acc);
                    v.axpy(w, &acc, 1.0);
                }
            }
            v
        })
        .collect();
    (1..=mesh.n_intervals())
        .map(|i| {
            let mut v = Vector::zeros(n);
            for j in 1..=i {
                v += table.entry(j, i) * &aggregates[j - 1];
            }
            v
        })
        .collect()
}
