//! Subcommand implementations. Each returns the text printed to stdout and
//! whether its checks passed.

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;
use volterra_impulse::adjoint::{check_stationarity, delta_j_adjoint, gradient, unit_variation, StationarityReport};
use volterra_impulse::forward::{find_certifying_mu, fixed_point_residual, solve_marching, solve_picard};
use volterra_impulse::linear::{path_boundary_values, solve_linear, LinearMode, LinearSystem};
use volterra_impulse::ode::{verify_mp_ode, CostateResiduals};
use volterra_impulse::optimizer::{enumerate_optimal, projected_gradient, GradientOptions};
use volterra_impulse::variational::{delta_j_direct, Linearization};
use volterra_impulse::{eval_cost, ControlPolicy, PiecewiseTrajectory, Vector};

use crate::config::Resolved;
use crate::output::{failures, to_vecs, trajectory_csv, write_json, write_text, Check};
use crate::Settings;

pub struct Outcome {
    pub stdout: String,
    pub passed: bool,
}

/// Forward-difference step for gradient tables.
pub const FD_STEP: f64 = 1e-5;
/// Tolerance on `|FD − δJ|` for a forward difference at `FD_STEP`.
pub const FD_TOL: f64 = 5e-4;
/// Relative tolerance between adjoint and direct `δJ`.
pub const EQUIV_TOL: f64 = 1e-6;

pub fn cost_of(r: &Resolved, policy: &ControlPolicy, tol: f64) -> Result<f64> {
    let x = solve_marching(&r.problem, policy, &r.mesh, tol)?;
    Ok(eval_cost(&r.problem, &x, policy, &r.mesh)?)
}

pub fn solve(r: &Resolved, s: &Settings) -> Result<Outcome> {
    let x = solve_marching(&r.problem, &r.policy, &r.mesh, s.tol)?;
    let pic = solve_picard(&r.problem, &r.policy, &r.mesh, s.tol, 1000)?;
    let residual = fixed_point_residual(&r.problem, &r.policy, &r.mesh, &x)?;
    let cert = find_certifying_mu(r.problem.lipschitz_f, r.problem.lipschitz_g, &r.mesh);
    let summary = json!({
        "problem": r.name,
        "iterations": pic.iterations,
        "picard_converged": pic.converged,
        "residual": residual,
        "spectral_ok": cert.is_some(),
        "mu": cert.map(|c| c.mu),
        "marching_picard_distance": x.sup_distance(&pic.trajectory),
        "cost": eval_cost(&r.problem, &x, &r.policy, &r.mesh)?,
    });
    write_text(&s.out, "trajectory.csv", &trajectory_csv(&x, &r.mesh))?;
    let stdout = write_json(&s.out, "summary.json", &summary)?;
    Ok(Outcome { stdout, passed: true })
}

/// Linear system with coefficients frozen along the state trajectory and the
/// forcing chosen so that the state itself solves it.
pub fn frozen_system(r: &Resolved, x: &PiecewiseTrajectory) -> Result<LinearSystem> {
    let lin = Linearization::new(&r.problem, &r.policy, x, &r.mesh)?;
    let sys = lin.linear_system(PiecewiseTrajectory::zeros(r.problem.n, &r.mesh));
    let mesh = &r.mesh;
    let forcing = PiecewiseTrajectory::from_fn(r.problem.n, mesh, |p, _| {
        let mut v = x.values[p].clone();
        let mut acc = Vector::zeros(r.problem.n);
        for q in 0..=p {
            let w = mesh.weight_to(p, q);
            if w != 0.0 {
                acc.fill(0.0);
                sys.kernel.apply(p, q, &x.values[q], &mut acc);
                v.axpy(-w, &acc, 1.0);
            }
        }
        for i in 1..=mesh.active_impulses(p) {
            v -= sys.impulses.get(i, p) * x.left_limit(mesh, i);
        }
        v
    });
    Ok(sys.with_forcing(forcing))
}

pub fn mode_name(mode: LinearMode) -> &'static str {
    match mode {
        LinearMode::Direct => "direct",
        LinearMode::PathBoundary => "path_boundary",
        LinearMode::Resolvent => "resolvent",
    }
}

/// Cross-mode tolerance: the resolvent route carries the trapezoid error of
/// its kernel convolutions.
pub const MODE_TOL: f64 = 1e-4;

pub fn linear_modes(r: &Resolved, modes: &[LinearMode], tol: f64) -> Result<(serde_json::Value, f64)> {
    let x = solve_marching(&r.problem, &r.policy, &r.mesh, tol)?;
    let sys = frozen_system(r, &x)?;
    let table = sys.path_table(&r.mesh, r.mesh.n_intervals());
    let mut per_mode = serde_json::Map::new();
    let mut boundaries: Vec<Vec<Vector>> = Vec::new();
    for &mode in modes {
        let y = solve_linear(&sys, &r.mesh, mode, tol)?;
        let b = path_boundary_values(&sys, &table, &y, &r.mesh);
        per_mode.insert(
            mode_name(mode).into(),
            json!({ "boundary_values": to_vecs(&b), "left_limits": to_vecs(&y.left_limits(&r.mesh)) }),
        );
        boundaries.push(b);
    }
    let mut spread: f64 = 0.0;
    for other in boundaries.iter().skip(1) {
        for (a, b) in boundaries[0].iter().zip(other) {
            spread = spread.max((a - b).amax());
        }
    }
    let value = json!({
        "problem": r.name,
        "state_left_limits": to_vecs(&x.left_limits(&r.mesh)),
        "modes": per_mode,
        "max_discrepancy": spread,
    });
    Ok((value, spread))
}

pub fn linear(r: &Resolved, s: &Settings, modes: &[LinearMode]) -> Result<Outcome> {
    let (value, spread) = linear_modes(r, modes, s.tol)?;
    let stdout = write_json(&s.out, "linear.json", &value)?;
    Ok(Outcome { stdout, passed: spread <= MODE_TOL })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Direct,
    Adjoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientEntry {
    pub interval: usize,
    pub component: usize,
    pub delta: f64,
    pub direct: f64,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub fd_error: f64,
}

pub struct GradientTable {
    pub delta: Vec<Vector>,
    pub stationarity: StationarityReport,
    pub entries: Vec<GradientEntry>,
    pub max_equivalence: f64,
    pub max_fd_error: f64,
}

/// `δJ` along every unit direction by the direct and adjoint routes, with
/// forward differences of the marched cost.
pub fn gradient_table(r: &Resolved, mode: GradientMode, tol: f64, stationarity_tol: f64) -> Result<GradientTable> {
    let x = solve_marching(&r.problem, &r.policy, &r.mesh, tol)?;
    let (ctx, _, delta) = gradient(&r.problem, &r.policy, &x, &r.mesh, tol)?;
    let j0 = eval_cost(&r.problem, &x, &r.policy, &r.mesh)?;
    let fd_tol = tol.min(1e-12);
    let mut entries = Vec::new();
    for k in 0..r.mesh.n_intervals() {
        for c in 0..r.problem.m {
            let alpha = unit_variation(&r.mesh, r.problem.m, k, c);
            let dx = ctx.delta_x(&alpha, &r.mesh)?;
            let direct = delta_j_direct(&r.problem, &r.policy, &x, &alpha, &dx, &r.mesh)?;
            let adjoint = delta_j_adjoint(&delta, &alpha)?;
            let fd = (cost_of(r, &r.policy.perturbed(&alpha, FD_STEP), fd_tol)? - j0) / FD_STEP;
            let chosen = if mode == GradientMode::Direct { direct } else { adjoint };
            entries.push(GradientEntry {
                interval: k + 1,
                component: c + 1,
                delta: delta[k][c],
                direct,
                adjoint,
                finite_difference: fd,
                fd_error: (chosen - fd).abs(),
            });
        }
    }
    let max_equivalence =
        entries.iter().map(|e| (e.adjoint - e.direct).abs() / (1.0 + e.direct.abs())).fold(0.0, f64::max);
    let max_fd_error = entries.iter().map(|e| e.fd_error).fold(0.0, f64::max);
    let stationarity = check_stationarity(&delta, &r.policy, stationarity_tol);
    Ok(GradientTable { delta, stationarity, entries, max_equivalence, max_fd_error })
}

pub fn gradient_cmd(r: &Resolved, s: &Settings, mode: GradientMode) -> Result<Outcome> {
    let t = gradient_table(r, mode, s.tol, 1e-6)?;
    let checks = [
        Check::at_most("adjoint_direct_equivalence", t.max_equivalence, EQUIV_TOL),
        Check::at_most("finite_difference", t.max_fd_error, FD_TOL),
    ];
    let value = json!({
        "problem": r.name,
        "mode": if mode == GradientMode::Direct { "direct" } else { "adjoint" },
        "policy": to_vecs(&r.policy.values),
        "fd_step": FD_STEP,
        "entries": t.entries,
        "checks": checks,
        "failures": failures(&checks),
    });
    let stdout = write_json(&s.out, "gradient.json", &value)?;
    Ok(Outcome { stdout, passed: checks.iter().all(|c| c.passed) })
}

fn stationarity_json(report: &StationarityReport) -> serde_json::Value {
    let components: Vec<_> = report
        .components
        .iter()
        .map(|c| {
            json!({
                "interval": c.interval,
                "component": c.component + 1,
                "delta": c.delta,
                "face": format!("{:?}", c.face).to_lowercase(),
                "violation": c.violation,
            })
        })
        .collect();
    json!({
        "passed": report.passed,
        "tol": report.tol,
        "worst_violation": report.worst_violation,
        "components": components,
    })
}

pub fn check_optimality(r: &Resolved, s: &Settings, stationarity_tol: f64) -> Result<Outcome> {
    let t = gradient_table(r, GradientMode::Adjoint, s.tol, stationarity_tol)?;
    let value = json!({
        "problem": r.name,
        "policy": to_vecs(&r.policy.values),
        "delta": to_vecs(&t.delta),
        "stationarity": stationarity_json(&t.stationarity),
        "fd_comparison": t.entries,
        "max_fd_error": t.max_fd_error,
        "failures": if t.stationarity.passed { vec![] } else { vec!["stationarity".to_string()] },
    });
    let stdout = write_json(&s.out, "check_optimality.json", &value)?;
    Ok(Outcome { stdout, passed: t.stationarity.passed })
}

pub struct OptimizeArgs {
    pub step: f64,
    pub iters: usize,
    pub tol: f64,
    pub enumerate_grid: Option<usize>,
}

pub fn optimize(r: &Resolved, s: &Settings, a: &OptimizeArgs) -> Result<Outcome> {
    if !(a.step > 0.0) {
        bail!(crate::config::InputError { kind: "invalid_flag", message: "--step must be positive".into() });
    }
    let opts = GradientOptions { step: a.step, iters: a.iters, tol: a.tol, solver_tol: s.tol };
    let res = projected_gradient(&r.problem, &r.mesh, &r.policy, &opts)?;
    let mut lines = String::new();
    for rec in &res.history {
        let line = json!({
            "iteration": rec.iteration,
            "policy": rec.policy,
            "cost": rec.cost,
            "step": rec.step,
            "worst_violation": rec.worst_violation,
        });
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
    }
    write_text(&s.out, "iterates.jsonl", &lines)?;
    let enumeration = match a.enumerate_grid {
        Some(grid) => {
            let en = enumerate_optimal(&r.problem, &r.mesh, &r.policy.bounds, grid, s.tol)?;
            Some(json!({
                "grid": grid,
                "policy": to_vecs(&en.policy.values),
                "cost": en.cost,
                "index": en.index,
                "max_distance_to_gradient_result": en
                    .policy
                    .flat()
                    .iter()
                    .zip(res.policy.flat())
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max),
            }))
        }
        None => None,
    };
    let summary = json!({
        "problem": r.name,
        "policy": to_vecs(&res.policy.values),
        "cost": res.cost,
        "converged": res.converged,
        "iterations": res.history.len() - 1,
        "stationarity": stationarity_json(&res.stationarity),
        "enumeration": enumeration,
    });
    write_json(&s.out, "optimize.json", &summary)?;
    Ok(Outcome { stdout: lines, passed: true })
}

fn costate_json(c: &CostateResiduals) -> serde_json::Value {
    json!({ "dynamics": c.dynamics, "jumps": c.jumps, "terminal": c.terminal })
}

pub const ROUTE_TOL: f64 = 1e-4;
pub const JUMP_TOL: f64 = 1e-6;

pub fn ode_checks(r: &Resolved, tol: f64) -> Result<(serde_json::Value, Vec<Check>)> {
    let Some(ode) = &r.ode else {
        bail!(crate::config::InputError {
            kind: "not_an_ode_problem",
            message: format!("`{}` is not defined as an impulsive ODE", r.name),
        });
    };
    let report = verify_mp_ode(ode, &r.policy, &r.mesh, tol, 1e-6)?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let state_residual = report.state.dynamics.max(report.state.initial).max(max(&report.state.jumps));
    let checks = vec![
        Check::at_most("route_equivalence", report.route_discrepancy, ROUTE_TOL),
        Check::at_most("jump_identity", max(&report.backward.jumps).max(max(&report.from_psi.jumps)), JUMP_TOL),
        Check::at_most("terminal_condition", report.backward.terminal.max(report.from_psi.terminal), JUMP_TOL),
        Check::at_most("state_equations", state_residual, 10.0 * tol),
    ];
    let value = json!({
        "problem": r.name,
        "route_discrepancy": report.route_discrepancy,
        "from_psi": costate_json(&report.from_psi),
        "backward": costate_json(&report.backward),
        "state": {
            "initial": report.state.initial,
            "dynamics": report.state.dynamics,
            "jumps": report.state.jumps,
        },
        "delta": to_vecs(&report.delta),
        "delta_from_p": to_vecs(&report.delta_from_p),
        "delta_discrepancy": report.delta_discrepancy,
        "stationarity": stationarity_json(&report.stationarity),
        "checks": checks,
        "failures": failures(&checks),
    });
    Ok((value, checks))
}

pub fn ode_verify(r: &Resolved, s: &Settings) -> Result<Outcome> {
    let (value, checks) = ode_checks(r, s.tol)?;
    let stdout = write_json(&s.out, "ode_verify.json", &value)?;
    Ok(Outcome { stdout, passed: checks.iter().all(|c| c.passed) })
}
