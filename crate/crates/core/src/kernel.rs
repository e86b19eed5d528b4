//! Matrix-valued kernels sampled on a [`TimeMesh`], their trapezoid
//! convolution, and the Neumann-series resolvent.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::TimeMesh;
use crate::model::{Matrix, Vector};

/// `K(s_p, t_q)` for `q ≤ p` in global node order, stored as row-major blocks.
///
/// The diagonal `q = p` holds the limit `K(s, s⁻)` used by the trapezoid rule.
/// Entries with `q > p` are zero by causality and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    rows: usize,
    cols: usize,
    n_nodes: usize,
    data: Vec<f64>,
}

fn tri(p: usize) -> usize {
    p * (p + 1) / 2
}

impl KernelGrid {
    pub fn zeros(rows: usize, cols: usize, n_nodes: usize) -> Self {
        Self { rows, cols, n_nodes, data: vec![0.0; tri(n_nodes) * rows * cols] }
    }

    pub fn from_fn(mesh: &TimeMesh, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Matrix) -> Self {
        let mut grid = Self::zeros(rows, cols, mesh.n_nodes());
        for p in 0..mesh.n_nodes() {
            for q in 0..=p {
                grid.set(p, q, &f(p, q));
            }
        }
        grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn block_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn block(&self, p: usize, q: usize) -> &[f64] {
        debug_assert!(q <= p);
        let b = self.block_len();
        let start = (tri(p) + q) * b;
        &self.data[start..start + b]
    }

    pub fn block_mut(&mut self, p: usize, q: usize) -> &mut [f64] {
        debug_assert!(q <= p);
        let b = self.block_len();
        let start = (tri(p) + q) * b;
        &mut self.data[start..start + b]
    }

    /// Blocks `(p, 0..=p)`.
    pub fn row(&self, p: usize) -> &[f64] {
        let b = self.block_len();
        &self.data[tri(p) * b..tri(p + 1) * b]
    }

    fn row_mut(&mut self, p: usize) -> &mut [f64] {
        let b = self.block_len();
        &mut self.data[tri(p) * b..tri(p + 1) * b]
    }

    /// Entry as a matrix; zero above the diagonal.
    pub fn get(&self, p: usize, q: usize) -> Matrix {
        if q > p {
            return Matrix::zeros(self.rows, self.cols);
        }
        Matrix::from_row_slice(self.rows, self.cols, self.block(p, q))
    }

    pub fn set(&mut self, p: usize, q: usize, m: &Matrix) {
        debug_assert_eq!((m.nrows(), m.ncols()), (self.rows, self.cols));
        let cols = self.cols;
        let block = self.block_mut(p, q);
        for i in 0..m.nrows() {
            for j in 0..cols {
                block[i * cols + j] = m[(i, j)];
            }
        }
    }

    /// `K(p, q) · v`.
    pub fn apply(&self, p: usize, q: usize, v: &Vector, out: &mut Vector) {
        let block = self.block(p, q);
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += block[i * self.cols + j] * v[j];
            }
            out[i] += acc;
        }
    }

    /// `out += w · (vᵀ K(p, q))ᵀ`, i.e. a row vector times the block.
    pub fn apply_left(&self, p: usize, q: usize, v: &Vector, w: f64, out: &mut Vector) {
        let block = self.block(p, q);
        for i in 0..self.rows {
            let vi = w * v[i];
            if vi == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                out[j] += vi * block[i * self.cols + j];
            }
        }
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }
}

/// `c += w · a · b` for row-major blocks `a: ra×k`, `b: k×cb`.
#[inline]
fn block_fma(c: &mut [f64], w: f64, a: &[f64], b: &[f64], ra: usize, k: usize, cb: usize) {
    for i in 0..ra {
        for l in 0..k {
            let f = w * a[i * k + l];
            if f == 0.0 {
                continue;
            }
            let brow = &b[l * cb..(l + 1) * cb];
            let crow = &mut c[i * cb..(i + 1) * cb];
            for j in 0..cb {
                crow[j] += f * brow[j];
            }
        }
    }
}

/// Trapezoid convolution `(A * B)(s, t) = ∫_t^s A(s, r) B(r, t) dr`.
///
/// The `r`-integral runs over the mesh nodes between `t_q` and `s_p`, so the
/// kernel jumps at breakpoints are integrated interval by interval. The
/// product keeps its order: `A` on the left.
pub fn kernel_convolve(a: &KernelGrid, b: &KernelGrid, mesh: &TimeMesh) -> KernelGrid {
    assert_eq!(a.cols, b.rows, "kernel block shapes do not chain");
    assert_eq!(a.n_nodes, b.n_nodes);
    let (ra, k, cb) = (a.rows, a.cols, b.cols);
    let bs = ra * cb;
    let mut out = KernelGrid::zeros(ra, cb, a.n_nodes);
    for p in 0..a.n_nodes {
        let c_row = out.row_mut(p);
        for r in 0..=p {
            let a_pr = a.block(p, r);
            let b_row = b.row(r);
            let w_between = if r < p { mesh.weight(r) } else { mesh.w_left(p) };
            if w_between != 0.0 {
                if ra == 1 && k == 1 && cb == 1 {
                    let f = w_between * a_pr[0];
                    for (c, bv) in c_row[..r].iter_mut().zip(&b_row[..r]) {
                        *c += f * bv;
                    }
                } else {
                    for q in 0..r {
                        block_fma(
                            &mut c_row[q * bs..(q + 1) * bs],
                            w_between,
                            a_pr,
                            &b_row[q * k * cb..(q + 1) * k * cb],
                            ra,
                            k,
                            cb,
                        );
                    }
                }
            }
            if r < p {
                let w_end = mesh.w_right(r);
                if w_end != 0.0 {
                    block_fma(
                        &mut c_row[r * bs..(r + 1) * bs],
                        w_end,
                        a_pr,
                        &b_row[r * k * cb..(r + 1) * k * cb],
                        ra,
                        k,
                        cb,
                    );
                }
            }
        }
    }
    out
}

/// Resolvent `R = Σ_{n≥1} K^{*n}` together with how the series was truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventGrid {
    pub kernel: KernelGrid,
    /// Number of convolution powers summed.
    pub terms: usize,
    /// Sup-norm of the last power added.
    pub tail_norm: f64,
}

const MAX_TERMS: usize = 200;

/// Neumann series for the resolvent, built by right-multiplying powers by `K`
/// until the newest power falls below `tol` in sup-norm.
pub fn resolvent_kernel(k: &KernelGrid, mesh: &TimeMesh, tol: f64) -> ResolventGrid {
    assert_eq!(k.rows, k.cols, "resolvent needs square blocks");
    let mut sum = k.clone();
    let mut power = k.clone();
    let mut terms = 1;
    let mut tail_norm = power.sup_norm();
    while tail_norm >= tol && terms < MAX_TERMS {
        power = kernel_convolve(&power, k, mesh);
        sum.add_assign(&power);
        terms += 1;
        tail_norm = power.sup_norm();
    }
    ResolventGrid { kernel: sum, terms, tail_norm }
}

/// Impulse kernels `L(s_p, τ_i)` for `i = 1..=N`, zero at nodes with `τ_i ≥ s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseKernels {
    rows: usize,
    cols: usize,
    n_impulses: usize,
    n_nodes: usize,
    data: Vec<f64>,
}

impl ImpulseKernels {
    pub fn zeros(rows: usize, cols: usize, n_impulses: usize, n_nodes: usize) -> Self {
        Self { rows, cols, n_impulses, n_nodes, data: vec![0.0; rows * cols * n_impulses * n_nodes] }
    }

    /// Fills the active nodes `p` (those with interval index `≥ i`) from `f(i, p)`.
    pub fn from_fn(mesh: &TimeMesh, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Matrix) -> Self {
        let mut out = Self::zeros(rows, cols, mesh.n_impulses(), mesh.n_nodes());
        for i in 1..=mesh.n_impulses() {
            for p in mesh.start_node(i)..mesh.n_nodes() {
                out.set(i, p, &f(i, p));
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_impulses(&self) -> usize {
        self.n_impulses
    }

    pub fn block(&self, i: usize, p: usize) -> &[f64] {
        let b = self.rows * self.cols;
        let start = ((i - 1) * self.n_nodes + p) * b;
        &self.data[start..start + b]
    }

    pub fn get(&self, i: usize, p: usize) -> Matrix {
        Matrix::from_row_slice(self.rows, self.cols, self.block(i, p))
    }

    pub fn set(&mut self, i: usize, p: usize, m: &Matrix) {
        let b = self.rows * self.cols;
        let start = ((i - 1) * self.n_nodes + p) * b;
        let cols = self.cols;
        for r in 0..self.rows {
            for c in 0..cols {
                self.data[start + r * cols + c] = m[(r, c)];
            }
        }
    }
}
