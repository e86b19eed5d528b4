//! Projected gradient on the control box and a brute-force grid oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::adjoint::{check_stationarity, gradient, StationarityReport};
use crate::error::{Error, Result};
use crate::forward::solve_marching;
use crate::mesh::TimeMesh;
use crate::model::{eval_cost, ControlBox, ControlPolicy, ProblemSpec, Vector};

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOptions {
    pub step: f64,
    pub iters: usize,
    /// Stationarity tolerance for the stopping rule.
    pub tol: f64,
    /// Forward-solver and resolvent tolerance.
    pub solver_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub policy: Vec<f64>,
    pub cost: f64,
    /// Step length accepted after this iterate, if any.
    pub step: Option<f64>,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub policy: ControlPolicy,
    pub cost: f64,
    pub history: Vec<IterateRecord>,
    pub stationarity: StationarityReport,
    pub converged: bool,
}

/// `a ← Π_U(a + step·Δ)` with the step halved (at most 30 times) until the
/// cost decreases. Stops when the stationarity check passes, when no halving
/// decreases the cost, or after `iters` iterations.
pub fn projected_gradient(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    a0: &ControlPolicy,
    opts: &GradientOptions,
) -> Result<GradientResult> {
    let cost_of = |policy: &ControlPolicy| -> Result<(f64, crate::model::PiecewiseTrajectory)> {
        let x = solve_marching(problem, policy, mesh, opts.solver_tol)?;
        Ok((eval_cost(problem, &x, policy, mesh)?, x))
    };
    let mut policy = a0.with_values(a0.values.iter().map(|a| a0.bounds.project(a)).collect());
    let (mut cost, mut x) = cost_of(&policy)?;
    let mut history = Vec::new();
    for iteration in 0..=opts.iters {
        let (_, _, delta) = gradient(problem, &policy, &x, mesh, opts.solver_tol)?;
        let report = check_stationarity(&delta, &policy, opts.tol);
        let mut record = IterateRecord {
            iteration,
            policy: policy.flat(),
            cost,
            step: None,
            worst_violation: report.worst_violation,
        };
        if report.passed || iteration == opts.iters {
            history.push(record);
            let converged = report.passed;
            return Ok(GradientResult { policy, cost, history, stationarity: report, converged });
        }
        let mut step = opts.step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = policy.with_values(
                policy.values.iter().zip(&delta).map(|(a, d)| policy.bounds.project(&(a + d * step))).collect(),
            );
            let (c, xc) = cost_of(&cand)?;
            if c < cost {
                accepted = Some((cand, c, xc));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, c, xc)) => {
                record.step = Some(step);
                history.push(record);
                policy = cand;
                cost = c;
                x = xc;
            }
            None => {
                history.push(record);
                return Ok(GradientResult { policy, cost, history, stationarity: report, converged: false });
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub policy: ControlPolicy,
    pub cost: f64,
    /// Grid index of the minimizer, one entry per control component.
    pub index: Vec<usize>,
    /// Costs in lexicographic grid order.
    pub table: Vec<f64>,
}

const MAX_GRID: u128 = 1_000_000;

/// Grid value `k` of `grid` points on `[lo, hi]`.
pub fn grid_value(lo: f64, hi: f64, grid: usize, k: usize) -> f64 {
    if grid <= 1 {
        lo
    } else {
        lo + (hi - lo) * k as f64 / (grid - 1) as f64
    }
}

/// Evaluates `J` on the product grid with `grid_per_dim` points per control
/// component. Ties keep the lexicographically smallest index.
pub fn enumerate_optimal(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    bounds: &ControlBox,
    grid_per_dim: usize,
    solver_tol: f64,
) -> Result<EnumerationResult> {
    let m = bounds.dim();
    let dims = m * mesh.n_intervals();
    let total = (grid_per_dim as u128).checked_pow(dims as u32).unwrap_or(u128::MAX);
    if total > MAX_GRID || grid_per_dim == 0 {
        return Err(Error::GridTooLarge(total));
    }
    let mut index = vec![0usize; dims];
    let mut table = Vec::with_capacity(total as usize);
    let mut best: Option<(f64, Vec<usize>, ControlPolicy)> = None;
    loop {
        let values = (0..mesh.n_intervals())
            .map(|k| {
                Vector::from_iterator(
                    m,
                    (0..m).map(|c| grid_value(bounds.lo[c], bounds.hi[c], grid_per_dim, index[k * m + c])),
                )
            })
            .collect();
        let policy = ControlPolicy { values, bounds: bounds.clone() };
        let x = solve_marching(problem, &policy, mesh, solver_tol)?;
        let cost = eval_cost(problem, &x, &policy, mesh)?;
        table.push(cost);
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, index.clone(), policy));
        }
        // advance the last component fastest
        let mut d = dims;
        loop {
            if d == 0 {
                let (cost, index, policy) = best.expect("grid is nonempty");
                return Ok(EnumerationResult { policy, cost, index, table });
            }
            d -= 1;
            index[d] += 1;
            if index[d] < grid_per_dim {
                break;
            }
            index[d] = 0;
        }
    }
}
