use nalgebra::{DMatrix, DVector};
use sparsetomo::geometry::{make_tilt_schedule, ImageGrid, ProjectionGeometry};
use sparsetomo::l1::{solve_l1, L1Options};
use sparsetomo::metrics::rmse;
use sparsetomo::phantom::{generate_pixel_sparse, PhantomSpec};
use sparsetomo::projector::{build_system_matrix, forward_project, Sinogram, SystemMatrix};

fn dense(a: &SystemMatrix) -> DMatrix<f64> {
    let rows = a.to_dense();
    DMatrix::from_fn(a.n_rows(), a.n_cols(), |i, j| rows[i][j])
}

fn tight() -> L1Options {
    L1Options { tol_primal: 1e-9, tol_dual: 1e-9, max_iters: 50_000, ..Default::default() }
}

#[test]
fn zero_data_gives_zero_image() {
    let a = build_system_matrix(&ProjectionGeometry::square(8, 8, 90.0, 8).unwrap());
    let b = Sinogram::zeros(8, 8);
    let r = solve_l1(&a, &b, &L1Options::default()).unwrap();
    assert!(r.image.values().iter().all(|&v| v == 0.0));
    assert!(r.converged);
    assert_eq!(r.residual_norm, 0.0);
}

#[test]
fn epsilon_above_data_norm_returns_zero_immediately() {
    let a = build_system_matrix(&ProjectionGeometry::square(8, 8, 90.0, 4).unwrap());
    let x = ImageGrid::filled(8, 8, 0.5).unwrap();
    let b = forward_project(&a, &x).unwrap();
    let opts = L1Options { epsilon: b.norm() * 1.01, ..Default::default() };
    let r = solve_l1(&a, &b, &opts).unwrap();
    assert_eq!(r.iterations, 0);
    assert!(r.diagnostics.is_empty());
    assert!(r.image.values().iter().all(|&v| v == 0.0));
}

#[test]
fn rejects_bad_options_and_dimensions() {
    let a = build_system_matrix(&ProjectionGeometry::square(4, 4, 90.0, 2).unwrap());
    let b = Sinogram::zeros(2, 4);
    assert!(solve_l1(&a, &b, &L1Options { epsilon: -1.0, ..Default::default() }).is_err());
    assert!(solve_l1(&a, &b, &L1Options { tol_dual: 0.0, ..Default::default() }).is_err());
    assert!(solve_l1(&a, &Sinogram::zeros(3, 4), &L1Options::default()).is_err());
}

/// Minimizes `‖x‖₁` over the feasible line `x₀ + t·v` of a 2×3 system by
/// scanning `t`.
fn brute_force_l1(rows: &[[f64; 3]; 2], x0: [f64; 3], nonneg: bool) -> [f64; 3] {
    let [r, s] = rows;
    let v = [r[1] * s[2] - r[2] * s[1], r[2] * s[0] - r[0] * s[2], r[0] * s[1] - r[1] * s[0]];
    let mut best = (f64::INFINITY, x0);
    let steps = 400_000;
    for i in 0..=steps {
        let t = -10.0 + 20.0 * i as f64 / steps as f64;
        let x = [x0[0] + t * v[0], x0[1] + t * v[1], x0[2] + t * v[2]];
        if nonneg && x.iter().any(|&c| c < 0.0) {
            continue;
        }
        let n: f64 = x.iter().map(|c| c.abs()).sum();
        if n < best.0 {
            best = (n, x);
        }
    }
    best.1
}

fn support(x: &[f64]) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, &v)| v.abs() > 1e-3).map(|(i, _)| i).collect()
}

#[test]
fn three_pixel_support_matches_brute_force() {
    // A 3×1 strip seen by two oblique bins gives two measurements.
    let a = SystemMatrix::for_angles(3, 1, 2, &[60.0]);
    let d = a.to_dense();
    let rows = [[d[0][0], d[0][1], d[0][2]], [d[1][0], d[1][1], d[1][2]]];
    for nonneg in [true, false] {
        for (j, amp) in [(0usize, 1.0), (1, 1.0), (2, 0.7)] {
            let mut x_true = [0.0; 3];
            x_true[j] = amp;
            let x = ImageGrid::from_values(3, 1, x_true.to_vec()).unwrap();
            let b = forward_project(&a, &x).unwrap();
            let oracle = brute_force_l1(&rows, x_true, nonneg);
            let r = solve_l1(&a, &b, &L1Options { nonneg, ..tight() }).unwrap();
            assert!(r.converged);
            assert_eq!(support(r.image.values()), support(&oracle), "pixel {j} nonneg {nonneg}");
            let n_solver: f64 = r.image.values().iter().map(|v| v.abs()).sum();
            let n_oracle: f64 = oracle.iter().map(|v| v.abs()).sum();
            assert!((n_solver - n_oracle).abs() < 1e-4);
        }
    }
}

/// A 4×4 geometry whose four angles give a full-rank matrix.
fn full_rank_4x4() -> SystemMatrix {
    let angles: Vec<f64> = make_tilt_schedule(90.0, 4).unwrap().angles().iter().map(|a| a + 30.0).collect();
    SystemMatrix::for_angles(4, 4, 4, &angles)
}

#[test]
fn full_rank_system_matches_least_squares_oracle() {
    let a = full_rank_4x4();
    let m = dense(&a);
    assert_eq!(m.rank(1e-10), 16);
    for seed in 0..5 {
        let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(4, 0.5, seed)).unwrap();
        let b = forward_project(&a, &x).unwrap();
        let ls = m
            .clone()
            .svd(true, true)
            .solve(&DVector::from_column_slice(b.values()), 1e-12)
            .unwrap();
        let r = solve_l1(&a, &b, &tight()).unwrap();
        assert!(r.converged);
        let err = r.image.values().iter().zip(ls.iter()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn counting_bound_recovery_on_32x32() {
    let a = build_system_matrix(&ProjectionGeometry::square(32, 32, 90.0, 32).unwrap());
    for (seed, k) in [(0u64, 0.1), (1, 0.4), (2, 0.7)] {
        let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(32, k, seed)).unwrap();
        let b = forward_project(&a, &x).unwrap();
        let r = solve_l1(&a, &b, &L1Options::default()).unwrap();
        assert!(r.converged, "k {k}");
        assert!(rmse(&r.image, &x).unwrap() <= 1e-3, "k {k}");
        // The minimizer cannot beat a feasible point by more than the tolerance.
        let true_norm: f64 = x.values().iter().sum();
        assert!(r.objective <= true_norm * (1.0 + 1e-4));
    }
}

#[test]
fn noisy_constraint_is_met_at_convergence() {
    let a = build_system_matrix(&ProjectionGeometry::square(16, 16, 90.0, 10).unwrap());
    let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(16, 0.2, 3)).unwrap();
    let b = forward_project(&a, &x).unwrap();
    let eps = 0.05 * b.norm();
    let opts = L1Options { epsilon: eps, ..Default::default() };
    let r = solve_l1(&a, &b, &opts).unwrap();
    assert!(r.converged);
    assert!(r.residual_norm <= eps + opts.tol_primal * b.norm());
    assert!(r.objective <= x.values().iter().sum::<f64>());
    // The ℓ1 minimizer sits on the boundary of the data ball.
    assert!(r.residual_norm >= eps * (1.0 - 1e-3));
}

#[test]
fn deterministic_and_scale_equivariant() {
    let a = build_system_matrix(&ProjectionGeometry::square(16, 16, 90.0, 12).unwrap());
    let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(16, 0.15, 9)).unwrap();
    let b = forward_project(&a, &x).unwrap();
    let opts = L1Options::default();
    let r1 = solve_l1(&a, &b, &opts).unwrap();
    let r2 = solve_l1(&a, &b, &opts).unwrap();
    assert_eq!(r1, r2);

    let c = 3.0;
    let a_scaled = a.scaled(c);
    let b_scaled = Sinogram::new(b.n_proj(), b.n_det(), b.values().iter().map(|v| v * c).collect()).unwrap();
    let r3 = solve_l1(&a_scaled, &b_scaled, &opts).unwrap();
    let diff = rmse(&r1.image, &r3.image).unwrap();
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn diagnostics_match_iteration_count() {
    let a = build_system_matrix(&ProjectionGeometry::square(8, 8, 90.0, 6).unwrap());
    let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(8, 0.2, 1)).unwrap();
    let b = forward_project(&a, &x).unwrap();
    let r = solve_l1(&a, &b, &L1Options { max_iters: 100, ..Default::default() }).unwrap();
    assert_eq!(r.diagnostics.len(), r.iterations);
    assert!(r.iterations <= 100);
    assert!(r.diagnostics.iter().all(|d| d.residual >= 0.0 && d.c_alpha.is_none()));
}
