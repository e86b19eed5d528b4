mod common;

use common::*;
use volterra_impulse::adjoint::{check_stationarity, gradient};
use volterra_impulse::catalog::NAMES;
use volterra_impulse::forward::solve_marching;
use volterra_impulse::optimizer::*;
use volterra_impulse::*;

fn opts(iters: usize) -> GradientOptions {
    GradientOptions { step: 1.0, iters, tol: 1e-8, solver_tol: 1e-12 }
}

#[test]
fn stationary_start_returns_immediately() {
    let b = load("null");
    let mesh = mesh_for(&b, 11);
    let a0 = default_policy(&b);
    let res = projected_gradient(&b.problem, &mesh, &a0, &opts(50)).unwrap();
    assert!(res.converged);
    assert_eq!(res.history.len(), 1);
    assert_eq!(res.policy, a0);
}

#[test]
fn reaches_reachable_target() {
    // x(T⁻) = 1 + 0.5 (a1 + a2): target 1.3 is reached by many policies
    let b = load_with("controlled-linear", &[("target", 1.3)]);
    let mesh = mesh_for(&b, 11);
    let res = projected_gradient(&b.problem, &mesh, &default_policy(&b), &opts(200)).unwrap();
    let x = solve_marching(&b.problem, &res.policy, &mesh, 1e-12).unwrap();
    assert!((x.left_limit(&mesh, 2)[0] - 1.3).abs() < 1e-4);
    assert!(res.cost < 1e-8);
}

#[test]
fn hand_computed_minimizer() {
    let (target, r) = (1.5, 0.5);
    let b = load_with("controlled-linear", &[("target", target), ("r", r)]);
    let mesh = mesh_for(&b, 11);
    let a_star = 2.0 * (target - 1.0) / (r + 2.0);
    let res = projected_gradient(&b.problem, &mesh, &default_policy(&b), &opts(200)).unwrap();
    assert!(res.converged);
    for a in res.policy.flat() {
        assert!((a - a_star).abs() < 1e-6);
    }
    let en = enumerate_optimal(&b.problem, &mesh, &b.defaults.bounds, 21, 1e-12).unwrap();
    for a in en.policy.flat() {
        assert!((a - a_star).abs() <= 0.1 + 1e-12);
    }
    assert!(res.cost <= en.cost + 1e-12);
}

#[test]
fn cost_history_never_increases() {
    for name in NAMES {
        let b = load(name);
        let mesh = mesh_for(&b, 21);
        let res = projected_gradient(&b.problem, &mesh, &default_policy(&b), &opts(15)).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1].cost < w[0].cost, "{name}");
        }
        assert!(res.policy.values.iter().all(|a| res.policy.bounds.contains(a)), "{name}");
    }
}

#[test]
fn active_bound_is_certified() {
    // r = 0 and target far above reach: the optimum sits on the upper face
    let b = load_with("controlled-linear", &[("target", 5.0)]);
    let mesh = mesh_for(&b, 11);
    let res = projected_gradient(&b.problem, &mesh, &default_policy(&b), &opts(50)).unwrap();
    assert_eq!(res.policy.flat(), vec![1.0, 1.0]);
    assert!(res.converged);
    let x = solve_marching(&b.problem, &res.policy, &mesh, 1e-12).unwrap();
    let (_, _, delta) = gradient(&b.problem, &res.policy, &x, &mesh, 1e-12).unwrap();
    assert!(check_stationarity(&delta, &res.policy, 1e-8).passed);
    assert!(delta.iter().all(|d| d[0] > 0.0));
}

#[test]
fn constant_cost_enumeration() {
    let b = load("null");
    let mesh = mesh_for(&b, 5);
    let en = enumerate_optimal(&b.problem, &mesh, &b.defaults.bounds, 7, 1e-12).unwrap();
    assert_eq!(en.index, vec![0, 0]);
    assert_eq!(en.table.len(), 49);
    assert!(en.table.iter().all(|&c| c == en.table[0]));
}

#[test]
fn enumeration_order_is_lexicographic() {
    let b = load("controlled-linear");
    let mesh = mesh_for(&b, 5);
    let en = enumerate_optimal(&b.problem, &mesh, &b.defaults.bounds, 3, 1e-12).unwrap();
    // J = x(T⁻) = 1 + 0.5 (a1 + a2); a2 varies fastest
    let want: Vec<f64> =
        (0..9).map(|k| 1.0 + 0.5 * (grid_value(-1.0, 1.0, 3, k / 3) + grid_value(-1.0, 1.0, 3, k % 3))).collect();
    for (got, w) in en.table.iter().zip(want) {
        assert!((got - w).abs() < 1e-14);
    }
    assert_eq!(en.index, vec![0, 0]);
}

#[test]
fn oversized_grid_is_rejected() {
    let b = load("memory-decay");
    let mesh = mesh_for(&b, 5);
    assert!(matches!(enumerate_optimal(&b.problem, &mesh, &b.defaults.bounds, 41, 1e-12), Err(Error::GridTooLarge(_))));
}

#[test]
fn gradient_result_is_near_enumeration_optimum() {
    let b = load("lq-impulsive-ode");
    let mesh = mesh_for(&b, 21);
    let res = projected_gradient(&b.problem, &mesh, &default_policy(&b), &opts(100)).unwrap();
    let en = enumerate_optimal(&b.problem, &mesh, &b.defaults.bounds, 41, 1e-12).unwrap();
    // J is smooth, so a grid-cell offset changes it by O(cell²)
    assert!(res.cost <= en.cost + 1e-3, "{} vs {}", res.cost, en.cost);
}
