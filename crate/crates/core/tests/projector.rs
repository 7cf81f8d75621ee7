use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsetomo::geometry::{ImageGrid, ProjectionGeometry};
use sparsetomo::metrics::dot;
use sparsetomo::projector::{
    back_project, build_system_matrix, estimate_operator_norm, forward_project, ray_intersections, Sinogram,
    SystemMatrix,
};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn adjoint_identity_on_16x16() {
    let a = build_system_matrix(&ProjectionGeometry::square(16, 16, 90.0, 20).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x = ImageGrid::from_values(16, 16, random_vec(&mut rng, 256)).unwrap();
        let y = Sinogram::new(20, 16, random_vec(&mut rng, 320)).unwrap();
        let lhs = dot(forward_project(&a, &x).unwrap().values(), y.values());
        let rhs = dot(x.values(), back_project(&a, &y).unwrap().values());
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn axis_aligned_rows_have_grid_side_length() {
    for (w, h) in [(4, 4), (16, 16), (7, 12)] {
        let vertical = SystemMatrix::for_angles(w, h, w, &[0.0]);
        for i in 0..w {
            assert!((vertical.row_sum(i) - h as f64).abs() <= 1e-12);
        }
        let horizontal = SystemMatrix::for_angles(w, h, h, &[90.0]);
        for i in 0..h {
            assert!((horizontal.row_sum(i) - w as f64).abs() <= 1e-12);
        }
    }
}

#[test]
fn diagonal_rows_match_chord_lengths() {
    // On a square of side n the 45° chord at signed offset s has length √2·n − 2|s|.
    for n in [4usize, 16] {
        let a = SystemMatrix::for_angles(n, n, n, &[45.0, -45.0]);
        for p in 0..2 {
            for d in 0..n {
                let s = d as f64 - (n as f64 - 1.0) / 2.0;
                let want = std::f64::consts::SQRT_2 * n as f64 - 2.0 * s.abs();
                let got = a.row_sum(p * n + d);
                assert!((got - want).abs() <= 1e-12, "n {n} s {s}: {got} vs {want}");
            }
        }
    }
}

/// Pixel index of the point `t` along the ray, or `None` outside the grid.
fn pixel_at(w: usize, h: usize, offset: f64, phi: f64, t: f64) -> Option<usize> {
    let (s, c) = phi.sin_cos();
    let x = offset * c - t * s + w as f64 / 2.0;
    let y = h as f64 / 2.0 - (offset * s + t * c);
    if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
        return None;
    }
    Some(y.floor() as usize * w + x.floor() as usize)
}

/// Per-pixel path lengths from dense sampling along the ray, with every
/// change of pixel located by bisection.
fn sampled_lengths(w: usize, h: usize, offset: f64, angle_deg: f64, samples: usize) -> Vec<f64> {
    let phi = angle_deg.to_radians();
    let at = |t: f64| pixel_at(w, h, offset, phi, t);
    let half = ((w * w + h * h) as f64).sqrt();
    let dt = 2.0 * half / samples as f64;
    let mut cuts = vec![-half];
    for i in 0..samples {
        let (mut t0, t1) = (-half + i as f64 * dt, -half + (i + 1) as f64 * dt);
        // Several crossings may share one interval; peel them off in order.
        while at(t0) != at(t1) {
            let (mut lo, mut hi) = (t0, t1);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if at(mid) == at(t0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push(hi);
            t0 = hi;
        }
    }
    cuts.push(half);
    let mut out = vec![0.0; w * h];
    for c in cuts.windows(2) {
        if let Some(p) = at(0.5 * (c[0] + c[1])) {
            out[p] += c[1] - c[0];
        }
    }
    out
}

#[test]
fn row_sums_match_ray_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let angles: Vec<f64> = (0..3).map(|_| rng.random_range(-90.0..90.0)).collect();
    let a = SystemMatrix::for_angles(8, 8, 8, &angles);
    for (p, &angle) in angles.iter().enumerate() {
        for d in 0..8 {
            let offset = d as f64 - 3.5;
            let oracle = sampled_lengths(8, 8, offset, angle, 10_000);
            let i = p * 8 + d;
            let total: f64 = oracle.iter().sum();
            assert!((a.row_sum(i) - total).abs() <= 1e-6, "angle {angle} bin {d}");
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                assert!((oracle[c as usize] - v).abs() <= 1e-6, "angle {angle} bin {d} pixel {c}");
            }
        }
    }
}

#[test]
fn rows_are_valid_and_counted() {
    let g = ProjectionGeometry::square(12, 9, 70.0, 13).unwrap();
    let a = build_system_matrix(&g);
    assert_eq!(a.n_rows(), 13 * 9);
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        assert!(vals.iter().all(|&v| v > 0.0));
        let mut sorted = cols.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), cols.len());
        assert!(cols.iter().all(|&c| (c as usize) < 144));
    }
}

#[test]
fn ray_missing_the_grid_is_empty() {
    assert!(ray_intersections(4, 4, 3.0, 0.0).is_empty());
    assert!(ray_intersections(4, 4, -2.9, 45.0).is_empty());
}

#[test]
fn forward_projection_matches_dense_product() {
    let a = build_system_matrix(&ProjectionGeometry::square(6, 6, 90.0, 4).unwrap());
    let dense = a.to_dense();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = ImageGrid::from_values(6, 6, random_vec(&mut rng, 36)).unwrap();
    let b = forward_project(&a, &x).unwrap();
    for (i, row) in dense.iter().enumerate() {
        let want = dot(row, x.values());
        assert!((b.values()[i] - want).abs() <= 1e-12);
    }
}

#[test]
fn uniform_image_scales_path_length() {
    let a = SystemMatrix::for_angles(5, 5, 5, &[0.0]);
    let b = forward_project(&a, &ImageGrid::filled(5, 5, 0.3).unwrap()).unwrap();
    assert!(b.values().iter().all(|&v| (v - 1.5).abs() <= 1e-12));
}

#[test]
fn operator_norm_matches_dense_svd() {
    let a = build_system_matrix(&ProjectionGeometry::square(8, 8, 90.0, 8).unwrap());
    let rows = a.to_dense();
    let m = DMatrix::from_fn(a.n_rows(), a.n_cols(), |i, j| rows[i][j]);
    let sigma = m.singular_values().max();
    let est = estimate_operator_norm(&a, 200, 1);
    assert!((est - sigma).abs() <= 0.01 * sigma, "{est} vs {sigma}");
    assert!(est <= sigma * (1.0 + 1e-12));
}
