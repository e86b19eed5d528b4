//! The `verify` battery: every structural identity checked on one config.

use anyhow::Result;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;
use volterra_impulse::adjoint::{costate_residual, delta_j_adjoint, gradient, hamiltonian_gradient_residual};
use volterra_impulse::forward::{
    find_certifying_mu, fixed_point_residual, jump_consistency, solve_marching, solve_picard,
};
use volterra_impulse::kernel::kernel_convolve;
use volterra_impulse::linear::{combined_kernel, dual_residual, dual_solve, LinearMode};
use volterra_impulse::model::validate_derivatives;
use volterra_impulse::variational::delta_j_direct;
use volterra_impulse::{ControlBox, ControlVariation, PiecewiseTrajectory, Vector};

use crate::commands::{gradient_table, linear_modes, ode_checks, GradientMode, Outcome, EQUIV_TOL, FD_TOL, MODE_TOL};
use crate::config::Resolved;
use crate::output::{failures, write_json, Check};
use crate::Settings;

const IDENTITY_TOL: f64 = 1e-4;

fn probe_box(bounds: &ControlBox) -> ControlBox {
    let lo = bounds.lo.iter().map(|v| v.max(-10.0)).collect::<Vec<_>>();
    let hi = bounds.hi.iter().zip(&lo).map(|(v, l)| v.min(10.0).max(*l)).collect();
    ControlBox { lo, hi }
}

fn random_forcing(rng: &mut StdRng, r: &Resolved) -> PiecewiseTrajectory {
    let n = r.problem.n;
    let coef: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..4.0), rng.gen_range(0.0..3.0)))
        .collect();
    let mesh = &r.mesh;
    PiecewiseTrajectory::from_fn(n, mesh, |p, t| {
        let k = mesh.interval_of(p) as f64;
        Vector::from_iterator(n, coef.iter().map(|&(a, b, w, ph)| a + 0.3 * k + b * (w * t + ph).sin()))
    })
}

fn random_variation(rng: &mut StdRng, r: &Resolved) -> ControlVariation {
    (0..r.mesh.n_intervals())
        .map(|_| Vector::from_iterator(r.problem.m, (0..r.problem.m).map(|_| rng.gen_range(-1.0..1.0))))
        .collect()
}

pub fn verify(r: &Resolved, s: &Settings) -> Result<Outcome> {
    let tol = s.tol;
    let mut rng = StdRng::seed_from_u64(s.seed);
    let mut checks = Vec::new();

    let x = solve_marching(&r.problem, &r.policy, &r.mesh, tol)?;
    let pic = solve_picard(&r.problem, &r.policy, &r.mesh, tol, 1000)?;
    let solver_tol = (10.0 * tol).max(1e-8);
    checks.push(Check::at_most("solver_equivalence", x.sup_distance(&pic.trajectory), solver_tol));
    checks.push(Check::at_most("jump_consistency", jump_consistency(&r.problem, &r.policy, &r.mesh, &x), solver_tol));
    checks.push(Check::at_most(
        "fixed_point_residual",
        fixed_point_residual(&r.problem, &r.policy, &r.mesh, &x)?,
        10.0 * tol,
    ));
    if let Some(cert) = find_certifying_mu(r.problem.lipschitz_f, r.problem.lipschitz_g, &r.mesh) {
        // count late Picard steps whose weighted norm fails to shrink
        let norms = pic.weighted_step_norms(&r.mesh, cert.mu);
        let floor = 1e-12 * norms.first().copied().unwrap_or(0.0).max(1.0);
        let growth =
            (3..norms.len().saturating_sub(1)).filter(|&k| norms[k] > floor && norms[k + 1] >= norms[k]).count();
        checks.push(Check::at_most("picard_contraction", growth as f64, 0.0));
    }

    let probes = probe_box(&r.policy.bounds);
    let report = validate_derivatives(&r.problem, &r.mesh, &probes, &mut rng, 100, 1e-5)?;
    checks.push(Check::at_most("derivatives", report.max_error(), IDENTITY_TOL));

    let (ctx, adj, delta) = gradient(&r.problem, &r.policy, &x, &r.mesh, tol)?;
    let sys = ctx.lin.linear_system(PiecewiseTrajectory::zeros(r.problem.n, &r.mesh));
    let k = combined_kernel(&sys, &ctx.lin.table, &r.mesh);
    let rk = kernel_convolve(&ctx.resolvent.kernel, &k, &r.mesh);
    checks.push(Check::at_most("resolvent_identity", rk.sup_distance(&ctx.resolvent.kernel.sub(&k)), IDENTITY_TOL));

    let mut dual: f64 = 0.0;
    for _ in 0..10 {
        let eta = random_forcing(&mut rng, r);
        let y = dual_solve(&ctx.resolvent, &eta, &r.mesh);
        dual = dual.max(dual_residual(&sys, &ctx.lin.table, &y, &eta, &r.mesh));
    }
    checks.push(Check::at_most("duality", dual, IDENTITY_TOL));

    let modes = [LinearMode::Direct, LinearMode::PathBoundary, LinearMode::Resolvent];
    let (_, spread) = linear_modes(r, &modes, tol)?;
    checks.push(Check::at_most("linear_mode_agreement", spread, MODE_TOL));

    let mut equivalence: f64 = 0.0;
    for _ in 0..20 {
        let alpha = random_variation(&mut rng, r);
        let dx = ctx.delta_x(&alpha, &r.mesh)?;
        let direct = delta_j_direct(&r.problem, &r.policy, &x, &alpha, &dx, &r.mesh)?;
        let adjoint = delta_j_adjoint(&delta, &alpha)?;
        equivalence = equivalence.max((adjoint - direct).abs() / (1.0 + direct.abs()));
    }
    checks.push(Check::at_most("gradient_equivalence", equivalence, EQUIV_TOL));

    let table = gradient_table(r, GradientMode::Adjoint, tol, 1e-6)?;
    checks.push(Check::at_most("finite_difference", table.max_fd_error, FD_TOL));

    checks.push(Check::at_most(
        "costate_equation",
        costate_residual(&ctx.lin, &adj.xi, &adj.costate, &r.mesh),
        IDENTITY_TOL,
    ));
    checks.push(Check::at_most(
        "hamiltonian_gradient",
        hamiltonian_gradient_residual(&r.problem, &r.policy, &x, &ctx.lin, &adj, &r.mesh),
        IDENTITY_TOL,
    ));

    if r.ode.is_some() {
        let (_, ode) = ode_checks(r, tol)?;
        checks.extend(ode.into_iter().map(|mut c| {
            c.name = format!("ode_{}", c.name);
            c
        }));
    }

    let passed = checks.iter().all(|c| c.passed);
    let value = json!({
        "problem": r.name,
        "seed": s.seed,
        "passed": passed,
        "checks": checks,
        "failures": failures(&checks),
    });
    let stdout = write_json(&s.out, "verify.json", &value)?;
    Ok(Outcome { stdout, passed })
}
