use sparsetomo::geometry::{ImageGrid, ProjectionGeometry};
use sparsetomo::io::encode_csv;
use sparsetomo::metrics::{dot, rmse};
use sparsetomo::phantom::{generate_pixel_sparse, PhantomSpec};
use sparsetomo::projector::{build_system_matrix, forward_project};
use sparsetomo::study::{
    epsilon_grid, extract_transition_boundary, monotonicity_violations, run_dose_study, run_epsilon_sweep,
    run_phase_diagram, run_wedge_study, NoisyStudyConfig, PhaseDiagramCell, PhaseDiagramConfig, SweepSolver,
};
use sparsetomo::tv::TvOptions;

fn table(ks: &[f64], mus: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<PhaseDiagramCell> {
    ks.iter()
        .flat_map(|&k| {
            let f = &f;
            mus.iter().map(move |&mu| PhaseDiagramCell {
                k,
                mu,
                n_proj: 1,
                n_trials: 10,
                n_recovered: (10.0 * f(k, mu)) as usize,
                fraction: f(k, mu),
            })
        })
        .collect()
}

const KS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
const MUS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[test]
fn boundary_of_constant_tables() {
    let ones = extract_transition_boundary(&table(&KS, &MUS, |_, _| 1.0), 0.5).unwrap();
    assert_eq!(ones, KS.iter().map(|&k| (k, 0.2)).collect::<Vec<_>>());
    assert!(extract_transition_boundary(&table(&KS, &MUS, |_, _| 0.0), 0.5).unwrap().is_empty());
}

#[test]
fn boundary_of_step_table() {
    let cells = table(&KS, &MUS, |k, mu| if mu >= 2.0 * k - 1e-12 { 1.0 } else { 0.0 });
    let b = extract_transition_boundary(&cells, 0.5).unwrap();
    assert_eq!(b, vec![(0.1, 0.2), (0.2, 0.4), (0.3, 0.6), (0.4, 0.8)]);
    let m = monotonicity_violations(&cells).unwrap();
    assert_eq!((m.max_violations_along_k, m.max_violations_along_mu), (0, 0));
}

#[test]
fn incomplete_grid_is_rejected() {
    let mut cells = table(&KS, &MUS, |_, _| 1.0);
    cells.pop();
    assert!(extract_transition_boundary(&cells, 0.5).is_err());
    assert!(monotonicity_violations(&cells).is_err());
}

#[test]
fn violations_are_counted_per_line() {
    let mut cells = table(&KS, &MUS, |_, _| 0.5);
    // One dip along μ at k = 0.1 and one rise along k at μ = 1.0.
    cells[1].fraction = 0.2;
    cells[3 * 5 + 4].fraction = 0.9;
    let m = monotonicity_violations(&cells).unwrap();
    assert_eq!((m.max_violations_along_k, m.max_violations_along_mu), (1, 1));
}

fn small_config() -> PhaseDiagramConfig {
    PhaseDiagramConfig {
        grid_size: 16,
        n_det: 16,
        k_values: vec![0.1, 0.5],
        mu_values: vec![0.3, 1.0],
        trials_per_cell: 3,
        base_seed: 21,
        ..Default::default()
    }
}

#[test]
fn phase_diagram_is_reproducible() {
    let cfg = small_config();
    let a = run_phase_diagram(&cfg).unwrap();
    let b = run_phase_diagram(&cfg).unwrap();
    assert_eq!(encode_csv(&a), encode_csv(&b));
    assert_eq!(a.len(), 4);
    for c in &a {
        assert!(c.n_recovered <= c.n_trials);
        assert_eq!(c.fraction, c.n_recovered as f64 / c.n_trials as f64);
    }
}

#[test]
fn noisy_phase_diagram_runs() {
    let cfg = PhaseDiagramConfig {
        noise: Some(1e7),
        eps_points: 4,
        trials_per_cell: 2,
        ..small_config()
    };
    let cells = run_phase_diagram(&cfg).unwrap();
    assert!(cells.iter().all(|c| (0.0..=1.0).contains(&c.fraction)));
    assert_eq!(cells, run_phase_diagram(&cfg).unwrap());
}

#[test]
fn dense_objects_at_low_sampling_fail() {
    let cfg = PhaseDiagramConfig {
        k_values: vec![0.9],
        mu_values: vec![0.1],
        trials_per_cell: 10,
        ..Default::default()
    };
    let cells = run_phase_diagram(&cfg).unwrap();
    assert_eq!(cells[0].fraction, 0.0);
}

#[test]
fn sparse_objects_at_full_sampling_recover() {
    let cfg = PhaseDiagramConfig {
        k_values: vec![0.1],
        mu_values: vec![1.0],
        trials_per_cell: 10,
        ..Default::default()
    };
    let cells = run_phase_diagram(&cfg).unwrap();
    assert_eq!(cells[0].n_proj, 32);
    assert_eq!(cells[0].fraction, 1.0);
}

#[test]
fn invalid_phase_config_is_rejected() {
    let bad = [
        PhaseDiagramConfig { k_values: vec![], ..Default::default() },
        PhaseDiagramConfig { k_values: vec![1.5], ..Default::default() },
        PhaseDiagramConfig { mu_values: vec![0.0], ..Default::default() },
        PhaseDiagramConfig { trials_per_cell: 0, ..Default::default() },
    ];
    for cfg in bad {
        assert!(run_phase_diagram(&cfg).is_err());
    }
}

fn blocks(n: usize) -> ImageGrid {
    ImageGrid::from_fn(n, n, |r, c| {
        let inner = (n / 4..3 * n / 4).contains(&r) && (n / 4..3 * n / 4).contains(&c);
        if inner { 0.6 } else if r >= n / 8 && c >= n / 8 { 0.2 } else { 0.0 }
    })
    .unwrap()
}

#[test]
fn single_epsilon_sweep() {
    let x = blocks(16);
    let a = build_system_matrix(&ProjectionGeometry::square(16, 16, 90.0, 10).unwrap());
    let b = forward_project(&a, &x).unwrap();
    let s = run_epsilon_sweep(&a, &b, &x, &[1e-5], &SweepSolver::Tv(TvOptions { max_iters: 300, ..Default::default() }))
        .unwrap();
    assert_eq!(s.curve.len(), 1);
    assert_eq!(s.best, 0);
    assert_eq!(s.best_point().epsilon, 1e-5);
}

#[test]
fn sweep_rejects_bad_grids() {
    let x = blocks(8);
    let a = build_system_matrix(&ProjectionGeometry::square(8, 8, 90.0, 4).unwrap());
    let b = forward_project(&a, &x).unwrap();
    let solver = SweepSolver::Tv(TvOptions::default());
    assert!(run_epsilon_sweep(&a, &b, &x, &[], &solver).is_err());
    assert!(run_epsilon_sweep(&a, &b, &x, &[0.2, 0.1], &solver).is_err());
    assert!(run_epsilon_sweep(&a, &b, &x, &[-1.0], &solver).is_err());
}

#[test]
fn large_epsilon_tail_is_a_flat_fit() {
    let n = 16;
    let x = blocks(n);
    let a = build_system_matrix(&ProjectionGeometry::square(n, n, 90.0, 10).unwrap());
    let b = forward_project(&a, &x).unwrap();
    let ones = forward_project(&a, &ImageGrid::filled(n, n, 1.0).unwrap()).unwrap();
    // Past the flat-fit residual every flat image c·1 with ‖c·A1 − b‖ ≤ ε is
    // a zero-TV solution; the admissible c form an interval around the
    // least-squares level, and the RMSE of c·1 is convex in c.
    let (qa, qb, qc) = (dot(ones.values(), ones.values()), dot(ones.values(), b.values()), dot(b.values(), b.values()));
    let c_best = qb / qa;
    let flat_resid = (qc - qb * qb / qa).sqrt();
    let mean = x.values().iter().sum::<f64>() / x.len() as f64;
    let flat_rmse = |c: f64| rmse(&ImageGrid::filled(n, n, c).unwrap(), &x).unwrap();
    let grid: Vec<f64> = [1.5, 2.0, 3.0].iter().map(|f| f * flat_resid).filter(|&e| e < b.norm()).collect();
    assert!(grid.len() >= 2);
    let s = run_epsilon_sweep(&a, &b, &x, &grid, &SweepSolver::Tv(TvOptions { max_iters: 3000, ..Default::default() }))
        .unwrap();
    for p in &s.curve {
        let half = (p.epsilon * p.epsilon - flat_resid * flat_resid).sqrt() / qa.sqrt();
        let (lo, hi) = (c_best - half, c_best + half);
        let best = flat_rmse(mean.clamp(lo, hi));
        let worst = flat_rmse(lo).max(flat_rmse(hi));
        assert!(p.rmse >= 0.99 * best && p.rmse <= 1.01 * worst, "ε {}: {} outside [{best}, {worst}]", p.epsilon, p.rmse);
    }
}

fn quick_study() -> NoisyStudyConfig {
    NoisyStudyConfig {
        n_det: 16,
        eps_points: 3,
        eps_lo: 0.5,
        eps_hi: 2.0,
        tv: TvOptions { max_iters: 40, ..Default::default() },
        base_seed: 8,
    }
}

#[test]
fn full_range_wedge_row_equals_dose_row() {
    let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(16, 0.3, 1)).unwrap();
    let cfg = quick_study();
    let dose = run_dose_study(&x, &[1e5], &[8, 12], &cfg).unwrap();
    let wedge = run_wedge_study(&x, 1e5, &[60.0, 90.0], &[8, 12], &cfg).unwrap();
    assert_eq!(wedge.len(), 4);
    for (d, w) in dose.iter().zip(&wedge[2..]) {
        assert_eq!((d.n_proj, d.total_counts, d.theta_max, d.seed), (w.n_proj, w.total_counts, w.theta_max, w.seed));
        assert_eq!(d.optimal_epsilon.to_bits(), w.optimal_epsilon.to_bits());
        assert_eq!(d.optimal_rmse.to_bits(), w.optimal_rmse.to_bits());
        assert_eq!(d.converged, w.converged);
    }
}

#[test]
fn dose_study_order_and_reproducibility() {
    let x = generate_pixel_sparse(&PhantomSpec::pixel_sparse(16, 0.3, 1)).unwrap();
    let cfg = quick_study();
    let r1 = run_dose_study(&x, &[1e4, 1e5], &[6, 9], &cfg).unwrap();
    let keys: Vec<(f64, usize)> = r1.iter().map(|r| (r.total_counts, r.n_proj)).collect();
    assert_eq!(keys, vec![(1e4, 6), (1e4, 9), (1e5, 6), (1e5, 9)]);
    assert!(r1.iter().all(|r| r.error.is_none() && r.optimal_rmse >= 0.0));
    let r2 = run_dose_study(&x, &[1e4, 1e5], &[6, 9], &cfg).unwrap();
    assert_eq!(encode_csv(&r1), encode_csv(&r2));
}

#[test]
fn failing_cells_are_flagged() {
    let x = ImageGrid::filled(16, 12, 0.5).unwrap();
    let r = run_dose_study(&x, &[1e4], &[4], &quick_study()).unwrap();
    assert!(r[0].error.is_some());
    assert_eq!(r[0].optimal_rmse, f64::INFINITY);
    assert!(run_wedge_study(&x, 1e4, &[120.0], &[4], &quick_study()).is_err());
}

#[test]
fn epsilon_grid_is_log_spaced() {
    let g = epsilon_grid(2.0, 1e-3, 3.0, 12).unwrap();
    assert_eq!(g.len(), 12);
    assert!((g[0] - 2e-3).abs() < 1e-15 && (g[11] - 6.0).abs() < 1e-12);
    let ratios: Vec<f64> = g.windows(2).map(|w| w[1] / w[0]).collect();
    assert!(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-12));
    assert!(epsilon_grid(0.0, 1e-3, 3.0, 12).is_err());
}
