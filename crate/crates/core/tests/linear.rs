mod common;

use common::*;
use proptest::prelude::*;
use volterra_impulse::kernel::*;
use volterra_impulse::linear::*;
use volterra_impulse::*;

fn scalar_table(i_max: usize, c: f64) -> PathSumTable {
    path_sum_table(1, i_max, |_, _| m1(c))
}

fn pure_jump_system(mesh: &TimeMesh) -> LinearSystem {
    LinearSystem::from_fns(mesh, 1, |_, _| m1(0.0), |_, _| m1(1.0), |_| v1(1.0))
}

fn ones(mesh: &TimeMesh) -> KernelGrid {
    KernelGrid::from_fn(mesh, 1, 1, |_, _| m1(1.0))
}

#[test]
fn path_enumeration_examples() {
    let p = enumerate_paths(3, 3).unwrap();
    assert_eq!(p.len(), 1);
    assert_eq!(p[0].indices, vec![3]);
    let p = enumerate_paths(1, 2).unwrap();
    assert_eq!(p.iter().map(|p| p.indices.clone()).collect::<Vec<_>>(), vec![vec![1, 2]]);
    let mut p: Vec<_> = enumerate_paths(1, 4).unwrap().into_iter().map(|p| p.indices).collect();
    p.sort();
    assert_eq!(p, vec![vec![1, 2, 3, 4], vec![1, 2, 4], vec![1, 3, 4], vec![1, 4]]);
    assert!(enumerate_paths(3, 2).unwrap().is_empty());
}

#[test]
fn path_enumeration_cap() {
    assert!(matches!(enumerate_paths(1, 40), Err(Error::PathEnumerationTooLarge { .. })));
}

#[test]
fn path_weight_examples() {
    let single = IncreasingPath { indices: vec![2] };
    assert_eq!(path_weight(2, &single, |_, _| Matrix::from_element(2, 2, 9.0)), Matrix::identity(2, 2));
    let path = IncreasingPath { indices: vec![1, 3, 4, 6] };
    assert!((path_weight(1, &path, |_, _| m1(0.5))[(0, 0)] - 0.125).abs() < 1e-15);
}

#[test]
fn path_weight_is_ordered() {
    let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    let b = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    // L(τ_i, τ_k): L(2,1) = a, L(3,2) = b
    let l = |i: usize, k: usize| match (i, k) {
        (2, 1) => a.clone(),
        (3, 2) => b.clone(),
        _ => Matrix::zeros(2, 2),
    };
    let w = path_weight(2, &IncreasingPath { indices: vec![1, 2, 3] }, l);
    assert_eq!(w, &b * &a);
    assert_ne!(w, &a * &b);
}

#[test]
fn path_table_examples() {
    let t = scalar_table(6, 1.0);
    for i in 1..=6 {
        assert_eq!(t.get(i, i), m1(1.0));
        for j in 1..i {
            assert_eq!(t.get(j, i)[(0, 0)], 2f64.powi((i - j - 1) as i32));
        }
    }
    let c = 0.3;
    assert!((scalar_table(3, c).get(1, 3)[(0, 0)] - (c * c + c)).abs() < 1e-15);
    assert_eq!(t.get(4, 2), m1(0.0));
}

#[test]
fn combined_objects_without_impulses() {
    let mesh = build_mesh(&[0.5], 1.0, 5).unwrap();
    let sys = LinearSystem::from_fns(&mesh, 1, |s, t| m1(s - 2.0 * t), |_, _| m1(0.0), |s| v1(s.cos()));
    let table = sys.path_table(&mesh, 1);
    assert_eq!(combined_kernel(&sys, &table, &mesh), sys.kernel);
    assert_eq!(combined_forcing(&sys, &table, &mesh), sys.forcing);
}

#[test]
fn combined_forcing_of_pure_jumps() {
    let mesh = build_mesh(&[1.0 / 3.0, 2.0 / 3.0], 1.0, 5).unwrap();
    let sys = pure_jump_system(&mesh);
    let table = sys.path_table(&mesh, 2);
    assert_eq!(combined_kernel(&sys, &table, &mesh).sup_norm(), 0.0);
    let h = combined_forcing(&sys, &table, &mesh);
    for p in 0..mesh.n_nodes() {
        let want = [1.0, 2.0, 4.0][mesh.interval_of(p)];
        assert_eq!(h.values[p][0], want);
    }
}

/// `Σ_{i: τ_i<s} Σ_{j≤i} L M h` against the double sum over all `(i, j)` in
/// `1..=N` with the zero extensions `M(j,i) = 0` for `i < j` and
/// `L(s, τ_i) = 0` for `τ_i ≥ s`. `L` is evaluated from the raw callable.
fn full_double_sum(
    sys: &LinearSystem,
    l: impl Fn(usize, f64) -> Matrix,
    table: &PathSumTable,
    mesh: &TimeMesh,
) -> Vec<Vector> {
    let n_imp = mesh.n_impulses();
    (0..mesh.n_nodes())
        .map(|p| {
            let mut v = sys.forcing.values[p].clone();
            for i in 1..=n_imp {
                // at s = τ_i only the right-limit slot lies past the impulse
                let past = mesh.tau(i) < mesh.node_time(p) || p >= mesh.right_limit_node(i);
                let li = if past { l(i, mesh.node_time(p)) } else { Matrix::zeros(sys.n, sys.n) };
                for j in 1..=n_imp {
                    v += &li * table.get(j, i) * &sys.forcing.values[mesh.left_limit_node(j)];
                }
            }
            v
        })
        .collect()
}

#[test]
fn convolution_of_ones_is_distance() {
    let mesh = build_mesh(&[0.4], 1.0, 21).unwrap();
    let c = kernel_convolve(&ones(&mesh), &ones(&mesh), &mesh);
    for p in 0..mesh.n_nodes() {
        for q in 0..=p {
            assert!((c.get(p, q)[(0, 0)] - (mesh.node_time(p) - mesh.node_time(q))).abs() < 1e-13);
        }
    }
    let zero = KernelGrid::zeros(1, 1, mesh.n_nodes());
    assert_eq!(kernel_convolve(&ones(&mesh), &zero, &mesh).sup_norm(), 0.0);
}

#[test]
fn convolution_is_associative_to_second_order() {
    let defect = |ppi: usize| {
        let mesh = build_mesh(&[0.5], 1.0, ppi).unwrap();
        let k1 = KernelGrid::from_fn(&mesh, 1, 1, |p, q| m1((mesh.node_time(p) * 2.0 - mesh.node_time(q)).sin()));
        let k2 = KernelGrid::from_fn(&mesh, 1, 1, |p, q| m1(1.0 + mesh.node_time(p) * mesh.node_time(q)));
        let k3 = KernelGrid::from_fn(&mesh, 1, 1, |p, q| m1((mesh.node_time(q) - mesh.node_time(p)).exp()));
        let left = kernel_convolve(&kernel_convolve(&k1, &k2, &mesh), &k3, &mesh);
        let right = kernel_convolve(&k1, &kernel_convolve(&k2, &k3, &mesh), &mesh);
        left.sup_distance(&right)
    };
    let (d1, d2) = (defect(11), defect(21));
    assert!(d1 < 1e-3 && d2 < d1 / 3.0, "{d1} {d2}");
}

#[test]
fn resolvent_of_zero_and_ones() {
    let mesh = build_mesh(&[], 1.0, 201).unwrap();
    let r = resolvent_kernel(&KernelGrid::zeros(1, 1, mesh.n_nodes()), &mesh, 1e-8);
    assert_eq!(r.kernel.sup_norm(), 0.0);
    let r = resolvent_kernel(&ones(&mesh), &mesh, 1e-8);
    assert!(r.tail_norm < 1e-8);
    let mut err: f64 = 0.0;
    for p in 0..mesh.n_nodes() {
        for q in 0..=p {
            err = err.max((r.kernel.get(p, q)[(0, 0)] - (mesh.node_time(p) - mesh.node_time(q)).exp()).abs());
        }
    }
    assert!(err < 1e-5, "{err}");
}

#[test]
fn resolvent_identity_both_sides() {
    let mesh = build_mesh(&[0.3, 0.7], 1.0, 31).unwrap();
    let k = KernelGrid::from_fn(&mesh, 2, 2, |p, q| {
        let (s, t) = (mesh.node_time(p), mesh.node_time(q));
        Matrix::from_row_slice(2, 2, &[(s - t).cos(), 0.5 * t, -0.3, 1.0 - s])
    });
    let tol = 1e-12;
    let r = resolvent_kernel(&k, &mesh, tol);
    let diff = r.kernel.sub(&k);
    assert!(kernel_convolve(&r.kernel, &k, &mesh).sup_distance(&diff) <= 10.0 * tol);
    assert!(kernel_convolve(&k, &r.kernel, &mesh).sup_distance(&diff) <= 1e-3);
}

#[test]
fn linear_modes_on_pure_jumps() {
    let mesh = build_mesh(&[1.0 / 3.0, 2.0 / 3.0], 1.0, 11).unwrap();
    let sys = pure_jump_system(&mesh);
    let table = sys.path_table(&mesh, 3);
    for mode in [LinearMode::Direct, LinearMode::PathBoundary, LinearMode::Resolvent] {
        let x = solve_linear(&sys, &mesh, mode, 1e-12).unwrap();
        let lefts: Vec<f64> = x.left_limits(&mesh).iter().map(|v| v[0]).collect();
        assert_eq!(lefts, vec![1.0, 2.0, 4.0], "{mode:?}");
        let bounds: Vec<f64> = path_boundary_values(&sys, &table, &x, &mesh).iter().map(|v| v[0]).collect();
        assert_eq!(bounds, vec![1.0, 2.0, 4.0]);
    }
}

#[test]
fn linear_modes_exponential() {
    let mesh = build_mesh(&[], 1.0, 201).unwrap();
    let sys = LinearSystem::from_fns(&mesh, 1, |_, _| m1(1.0), |_, _| m1(0.0), |_| v1(1.0));
    for mode in [LinearMode::Direct, LinearMode::PathBoundary, LinearMode::Resolvent] {
        let x = solve_linear(&sys, &mesh, mode, 1e-10).unwrap();
        for p in 0..mesh.n_nodes() {
            assert!((x.values[p][0] - mesh.node_time(p).exp()).abs() < 1e-3);
        }
    }
}

#[test]
fn dual_examples() {
    let mesh = build_mesh(&[], 1.0, 201).unwrap();
    let sys = LinearSystem::from_fns(&mesh, 1, |_, _| m1(1.0), |_, _| m1(0.0), |_| v1(0.0));
    let table = sys.path_table(&mesh, 0);
    let eta = PiecewiseTrajectory::from_fn(1, &mesh, |_, _| v1(1.0));
    let zero = ResolventGrid { kernel: KernelGrid::zeros(1, 1, mesh.n_nodes()), terms: 0, tail_norm: 0.0 };
    assert_eq!(dual_solve(&zero, &eta, &mesh), eta);
    let zero_sys = LinearSystem::from_fns(&mesh, 1, |_, _| m1(0.0), |_, _| m1(0.0), |_| v1(0.0));
    assert_eq!(dual_residual(&zero_sys, &table, &eta, &eta, &mesh), 0.0);
    let r = resolvent_kernel(&sys.kernel, &mesh, 1e-10);
    let y = dual_solve(&r, &eta, &mesh);
    for p in 0..mesh.n_nodes() {
        assert!((y.values[p][0] - (1.0 - mesh.node_time(p)).exp()).abs() < 1e-3);
    }
    assert!(dual_residual(&sys, &table, &y, &eta, &mesh) < 1e-4);
}

#[test]
fn dual_with_impulses_has_small_residual() {
    let mesh = build_mesh(&[0.3, 0.65], 1.0, 201).unwrap();
    let sys = LinearSystem::from_fns(
        &mesh,
        1,
        |s, t| m1(0.5 * (t - s).exp()),
        |i, s| m1(0.4 + 0.2 * (s - mesh.tau(i))),
        |_| v1(0.0),
    );
    let table = sys.path_table(&mesh, mesh.n_intervals());
    let k = combined_kernel(&sys, &table, &mesh);
    let r = resolvent_kernel(&k, &mesh, 1e-12);
    let eta = PiecewiseTrajectory::from_fn(1, &mesh, |_, t| v1(1.0 + t.sin()));
    let y = dual_solve(&r, &eta, &mesh);
    assert!(dual_residual(&sys, &table, &y, &eta, &mesh) < 1e-4);
}

fn random_l(c: [f64; 6], i: usize, s: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[c[4], 0.1 * s * i as f64, -0.2, c[5]])
}

fn random_system(mesh: &TimeMesh, c: [f64; 6]) -> LinearSystem {
    LinearSystem::from_fns(
        mesh,
        2,
        move |s, t| Matrix::from_row_slice(2, 2, &[c[0] * (s - t).cos(), c[1], c[2] * t, c[3] * s]),
        move |i, s| random_l(c, i, s),
        move |s| Vector::from_vec(vec![1.0 + c[0] * s, (c[1] * s).sin()]),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursion_matches_enumeration(seed in prop::collection::vec(-1.0f64..1.0, 4 * 7)) {
        let mats: Vec<Matrix> = seed.chunks(4).map(|c| Matrix::from_row_slice(2, 2, c)).collect();
        let l = |i: usize, k: usize| &mats[k - 1] * (1.0 + 0.1 * i as f64);
        let table = path_sum_table(2, 7, l);
        for i in 1..=7 {
            for j in 1..=i {
                let mut brute = Matrix::zeros(2, 2);
                for path in enumerate_paths(j, i).unwrap() {
                    brute += path_weight(2, &path, l);
                }
                prop_assert!((brute - table.get(j, i)).amax() <= 1e-12 * (1.0 + table.get(j, i).amax()));
            }
        }
    }

    #[test]
    fn triple_sum_reindexing(c in prop::array::uniform6(-1.0f64..1.0), t1 in 0.1f64..0.4, gap in 0.1f64..0.4) {
        let mesh = build_mesh(&[t1, t1 + gap], 1.0, 5).unwrap();
        let sys = random_system(&mesh, c);
        let table = sys.path_table(&mesh, 2);
        let strict = combined_forcing(&sys, &table, &mesh);
        let full = full_double_sum(&sys, |i, s| random_l(c, i, s), &table, &mesh);
        for (a, b) in strict.values.iter().zip(&full) {
            prop_assert!((a - b).amax() <= 1e-13);
        }
    }

    #[test]
    fn modes_agree(c in prop::array::uniform6(-1.0f64..1.0)) {
        let mesh = build_mesh(&[0.3, 0.6], 1.0, 41).unwrap();
        let sys = random_system(&mesh, c);
        let d = solve_linear(&sys, &mesh, LinearMode::Direct, 1e-12).unwrap();
        let pb = solve_linear(&sys, &mesh, LinearMode::PathBoundary, 1e-12).unwrap();
        let r = solve_linear(&sys, &mesh, LinearMode::Resolvent, 1e-12).unwrap();
        prop_assert!(d.sup_distance(&pb) <= 1e-12 * (1.0 + d.sup_norm()));
        prop_assert!(d.sup_distance(&r) <= 5e-3);
    }

    #[test]
    fn resolvent_identity_holds(c in prop::array::uniform6(-1.0f64..1.0)) {
        let mesh = build_mesh(&[0.5], 1.0, 11).unwrap();
        let sys = random_system(&mesh, c);
        let table = sys.path_table(&mesh, 1);
        let k = combined_kernel(&sys, &table, &mesh);
        let r = resolvent_kernel(&k, &mesh, 1e-12);
        prop_assert!(kernel_convolve(&r.kernel, &k, &mesh).sup_distance(&r.kernel.sub(&k)) <= 1e-10);
    }
}
