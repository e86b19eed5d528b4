mod common;

use common::*;
use proptest::prelude::*;
use volterra_impulse::catalog::NAMES;
use volterra_impulse::forward::*;
use volterra_impulse::*;

#[test]
fn zero_dynamics_reproduce_forcing() {
    let problem = ProblemSpec::new("square", 1, 1, Box::new(|s| v1(s * s)));
    let mesh = build_mesh(&[0.3, 0.6], 1.0, 9).unwrap();
    let policy = scalar_policy(&[0.0; 3]);
    let x = solve_marching(&problem, &policy, &mesh, 1e-12).unwrap();
    for p in 0..mesh.n_nodes() {
        assert_eq!(x.values[p][0], mesh.node_time(p).powi(2));
    }
    let pic = solve_picard(&problem, &policy, &mesh, 1e-12, 10).unwrap();
    assert_eq!(pic.iterations, 1);
    assert_eq!(pic.trajectory, x);
}

#[test]
fn pure_jump_left_limits_double() {
    let b = load("pure-jump");
    let mesh = mesh_for(&b, 11);
    let policy = default_policy(&b);
    let x = solve_marching(&b.problem, &policy, &mesh, 1e-12).unwrap();
    let lefts: Vec<f64> = x.left_limits(&mesh).iter().map(|v| v[0]).collect();
    assert_eq!(lefts, vec![1.0, 2.0, 4.0]);
    let pic = solve_picard(&b.problem, &policy, &mesh, 1e-12, 50).unwrap();
    assert!((pic.trajectory.left_limit(&mesh, 3)[0] - 4.0).abs() < 1e-12);
}

#[test]
fn pure_jump_general_c() {
    let c = 0.7;
    let b = load_with("pure-jump", &[("c", c)]);
    let mesh = mesh_for(&b, 11);
    let x = solve_marching(&b.problem, &default_policy(&b), &mesh, 1e-12).unwrap();
    let want = [1.0, 1.0 + c, 1.0 + 2.0 * c + c * c];
    for (i, w) in want.iter().enumerate() {
        assert!((x.left_limit(&mesh, i + 1)[0] - w).abs() < 1e-14);
    }
}

#[test]
fn exponential_kernel_reaches_e() {
    let b = load_with("exp-kernel", &[("beta", 0.0)]);
    let mesh = mesh_for(&b, 201);
    let policy = default_policy(&b);
    let x = solve_marching(&b.problem, &policy, &mesh, 1e-12).unwrap();
    assert!((x.values[mesh.n_nodes() - 1][0] - std::f64::consts::E).abs() < 1e-3);
    let pic = solve_picard(&b.problem, &policy, &mesh, 1e-10, 200).unwrap();
    assert!(pic.converged);
    assert!(x.sup_distance(&pic.trajectory) <= 1e-9);
}

#[test]
fn operator_is_constant_without_dynamics() {
    let problem = ProblemSpec::new("lin", 1, 1, Box::new(|s| v1(1.0 + s)));
    let mesh = build_mesh(&[0.25, 0.5], 1.0, 5).unwrap();
    let policy = scalar_policy(&[0.0; 3]);
    let mut z = OperatorPair::initial(&problem, &mesh);
    z.xi.values.iter_mut().for_each(|v| v[0] = 7.0);
    z.eta.iter_mut().for_each(|v| v[0] = -3.0);
    let s = apply_s(&problem, &policy, &mesh, &z).unwrap();
    assert_eq!(s, OperatorPair::initial(&problem, &mesh));
    assert_eq!(s.eta.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![1.25, 1.5]);
}

#[test]
fn first_boundary_component_ignores_jumps() {
    let b = load_with("pure-jump", &[("c", 5.0), ("d", 3.0)]);
    let mesh = mesh_for(&b, 5);
    let policy = scalar_policy(&[0.4, -0.2, 0.9]);
    let mut z = OperatorPair::initial(&b.problem, &mesh);
    z.eta.iter_mut().for_each(|v| v[0] = 11.0);
    let s = apply_s(&b.problem, &policy, &mesh, &z).unwrap();
    assert_eq!(s.eta[0][0], 1.0);
    assert_ne!(s.eta[1][0], 1.0);
}

#[test]
fn solution_is_a_fixed_point() {
    for name in NAMES {
        let b = load(name);
        let mesh = mesh_for(&b, 41);
        let policy = default_policy(&b);
        let tol = 1e-10;
        let x = solve_marching(&b.problem, &policy, &mesh, tol).unwrap();
        let r = fixed_point_residual(&b.problem, &policy, &mesh, &x).unwrap();
        assert!(r <= 10.0 * tol, "{name}: {r}");
        assert!(jump_consistency(&b.problem, &policy, &mesh, &x) < 1e-14, "{name}");
    }
}

#[test]
fn solvers_agree_on_builtins() {
    for name in NAMES {
        let b = load(name);
        let mesh = mesh_for(&b, 41);
        let policy = default_policy(&b);
        let tol = 1e-9;
        let x = solve_marching(&b.problem, &policy, &mesh, tol).unwrap();
        let pic = solve_picard(&b.problem, &policy, &mesh, tol, 300).unwrap();
        assert!(x.sup_distance(&pic.trajectory) <= (10.0 * tol).max(1e-8), "{name}");
    }
}

#[test]
fn certificate_zero_constants() {
    let mesh = build_mesh(&[0.3, 0.6], 1.0, 5).unwrap();
    let c = contraction_certificate(0.0, 0.0, &mesh, 1.0);
    assert_eq!([c.a11, c.a12, c.a21, c.a22], [0.0; 4]);
    assert!(c.spectral_ok);
}

#[test]
fn certificate_a11_value() {
    let mesh = build_mesh(&[0.5], 1.0, 5).unwrap();
    let c = contraction_certificate(1.0, 0.0, &mesh, 10.0);
    assert!((c.a11 - (1.0 - (-10.0f64).exp()) / 10.0).abs() < 1e-15);
    assert!((c.a11 - 0.0999955).abs() < 1e-7);
}

#[test]
fn certificate_without_impulses() {
    let mesh = build_mesh(&[], 1.0, 5).unwrap();
    let c = contraction_certificate(2.0, 3.0, &mesh, 4.0);
    assert_eq!([c.a12, c.a21, c.a22], [0.0; 3]);
}

#[test]
fn certificate_vanishes_for_large_weight() {
    let mesh = build_mesh(&[0.25, 0.5, 0.75], 1.0, 5).unwrap();
    let entries: Vec<_> = (1..=12).map(|k| contraction_certificate(1.5, 0.8, &mesh, 2f64.powi(k))).collect();
    for w in entries[4..].windows(2) {
        assert!(w[1].a11 < w[0].a11 && w[1].a21 < w[0].a21 && w[1].a22 < w[0].a22);
    }
    let last = entries.last().unwrap();
    assert!(last.a11 < 1e-3 && last.a21 < 1e-3 && last.a22 < 1e-12);
    assert!(last.spectral_ok);
    assert!(find_certifying_mu(1.5, 0.8, &mesh).is_some());
}

#[test]
fn picard_steps_contract_when_certified() {
    let b = load("memory-decay");
    let mesh = mesh_for(&b, 41);
    let cert = find_certifying_mu(b.problem.lipschitz_f, b.problem.lipschitz_g, &mesh).unwrap();
    assert!(cert.spectral_radius() < 1.0);
    let pic = solve_picard(&b.problem, &default_policy(&b), &mesh, 1e-12, 200).unwrap();
    let norms = pic.weighted_step_norms(&mesh, cert.mu);
    for k in 3..norms.len() - 1 {
        if norms[k] > 1e-13 {
            assert!(norms[k + 1] < norms[k], "step {k}: {:?}", &norms[k..k + 2]);
        }
    }
}

proptest! {
    #[test]
    fn spectral_test_matches_eigenvalues(cf in 0.0f64..3.0, cg in 0.0f64..1.5, mu in 0.05f64..60.0) {
        let mesh = build_mesh(&[0.2, 0.5, 0.9], 1.0, 3).unwrap();
        let c = contraction_certificate(cf, cg, &mesh, mu);
        prop_assert!(c.a11 >= 0.0 && c.a12 >= 0.0 && c.a21 >= 0.0 && c.a22 >= 0.0);
        let rho = c.spectral_radius();
        // keep clear of the boundary where roundoff decides
        if (rho - 1.0).abs() > 1e-9 {
            prop_assert_eq!(c.spectral_ok, rho < 1.0);
        }
    }
}
