//! Study drivers: recovery phase diagrams, ε sweeps, dose allocation and
//! missing-wedge studies.
//!
//! Every random draw is seeded through [`derive_seed`] from the base seed,
//! a task name and the cell coordinates, and results are collected in
//! coordinate order, so tables do not depend on the thread schedule.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{projections_for_sampling, sufficient_projection_number, ImageGrid, ProjectionGeometry};
use crate::io::{fmt_sig, CsvRecord};
use crate::l1::{solve_l1, L1Options};
use crate::metrics::{is_recovered, rmse, RecoveryRule};
use crate::noise::{apply_poisson_dose, noise_norm_estimate, simulate_ideal_data, DoseSpec};
use crate::phantom::{generate_pixel_sparse, PhantomSpec};
use crate::projector::{build_system_matrix, Sinogram, SystemMatrix};
use crate::recon::ReconResult;
use crate::seed::derive_seed;
use crate::tv::{solve_tv_asdpocs, TvOptions};

/// Task names used for seed derivation.
pub const TASK_PHANTOM: &str = "phase-phantom";
pub const TASK_PHASE_NOISE: &str = "phase-noise";
pub const TASK_NOISY_DATA: &str = "noisy-data";

/// Default ε grid: 12 log-spaced multiples of the noise-norm estimate
/// between 10⁻³ and 3.
pub const EPS_GRID_POINTS: usize = 12;
pub const EPS_GRID_LO: f64 = 1e-3;
pub const EPS_GRID_HI: f64 = 3.0;

/// Level at which [`extract_transition_boundary`] is usually read.
pub const BOUNDARY_LEVEL: f64 = 0.5;

/// `points` log-spaced values in `[lo·scale, hi·scale]`, ascending.
pub fn epsilon_grid(scale: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(scale > 0.0 && scale.is_finite() && lo > 0.0 && hi >= lo && points >= 1) {
        return Err(Error::param(format!(
            "ε grid needs scale > 0, 0 < lo ≤ hi and points ≥ 1 (got {scale}, {lo}, {hi}, {points})"
        )));
    }
    if points == 1 {
        return Ok(vec![lo * scale]);
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    Ok((0..points)
        .map(|i| scale * (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagramConfig {
    pub grid_size: usize,
    pub n_det: usize,
    pub k_values: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub trials_per_cell: usize,
    pub rule: RecoveryRule,
    /// Total electron count for noisy data; `None` for ideal data.
    pub noise: Option<f64>,
    pub theta_max: f64,
    pub base_seed: u64,
    pub l1: L1Options,
    pub eps_points: usize,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        Self {
            grid_size: 32,
            n_det: 32,
            k_values: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            mu_values: vec![0.2, 0.35, 0.5, 0.65, 0.8, 1.0],
            trials_per_cell: 10,
            rule: RecoveryRule::default(),
            noise: None,
            theta_max: 90.0,
            base_seed: 0,
            l1: L1Options::default(),
            eps_points: EPS_GRID_POINTS,
        }
    }
}

impl PhaseDiagramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.n_det == 0 {
            return Err(Error::param("grid_size and n_det must be positive"));
        }
        if self.k_values.is_empty() || self.mu_values.is_empty() {
            return Err(Error::param("k_values and mu_values must be non-empty"));
        }
        if let Some(k) = self.k_values.iter().find(|&&k| !(k > 0.0 && k <= 1.0)) {
            return Err(Error::param(format!("k values must lie in (0, 1], got {k}")));
        }
        if let Some(mu) = self.mu_values.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::param(format!("mu values must be positive, got {mu}")));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::param("trials_per_cell must be positive"));
        }
        if let Some(n) = self.noise {
            DoseSpec::new(n, 0)?;
        }
        if self.noise.is_some() && self.eps_points == 0 {
            return Err(Error::param("eps_points must be positive"));
        }
        crate::geometry::make_tilt_schedule(self.theta_max, 1)?;
        RecoveryRule::new(self.rule.rmse_threshold)?;
        self.l1.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagramCell {
    pub k: f64,
    pub mu: f64,
    pub n_proj: usize,
    pub n_trials: usize,
    pub n_recovered: usize,
    pub fraction: f64,
}

impl CsvRecord for PhaseDiagramCell {
    fn header() -> &'static [&'static str] {
        &["k", "mu", "n_proj", "n_trials", "n_recovered", "fraction"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_sig(self.k),
            fmt_sig(self.mu),
            self.n_proj.to_string(),
            self.n_trials.to_string(),
            self.n_recovered.to_string(),
            fmt_sig(self.fraction),
        ]
    }
}

/// Runs one trial of a phase-diagram cell; any failure counts as a miss.
fn phase_trial(cfg: &PhaseDiagramConfig, a: &SystemMatrix, ki: usize, mi: usize, trial: usize) -> bool {
    let coords = [ki as u64, mi as u64, trial as u64];
    let run = || -> Result<bool> {
        let spec = PhantomSpec::pixel_sparse(cfg.grid_size, cfg.k_values[ki], derive_seed(cfg.base_seed, TASK_PHANTOM, &coords));
        let x_true = generate_pixel_sparse(&spec)?;
        let b = simulate_ideal_data(a, &x_true)?;
        let image = match cfg.noise {
            None => solve_l1(a, &b, &L1Options { epsilon: 0.0, ..cfg.l1.clone() })?.image,
            Some(n_e) => {
                let dose = DoseSpec::new(n_e, derive_seed(cfg.base_seed, TASK_PHASE_NOISE, &coords))?;
                let noisy = apply_poisson_dose(&b, &dose)?;
                let scale = noise_norm_estimate(&noisy).unwrap_or(0.0);
                if scale == 0.0 {
                    // All counts are zero; nothing to reconstruct.
                    ImageGrid::zeros(cfg.grid_size, cfg.grid_size)?
                } else {
                    let grid = epsilon_grid(scale, EPS_GRID_LO, EPS_GRID_HI, cfg.eps_points)?;
                    let sweep = run_epsilon_sweep_serial(a, &noisy, &x_true, &grid, &SweepSolver::L1(cfg.l1.clone()))?;
                    sweep.best_image
                }
            }
        };
        is_recovered(&image, &x_true, cfg.rule)
    };
    run().unwrap_or(false)
}

pub fn run_phase_diagram(cfg: &PhaseDiagramConfig) -> Result<Vec<PhaseDiagramCell>> {
    cfg.validate()?;
    let n = cfg.grid_size;
    let n_suff = sufficient_projection_number(n, n, cfg.n_det)?;
    let n_projs: Vec<usize> = cfg.mu_values.iter().map(|&mu| projections_for_sampling(mu, n_suff)).collect();
    let matrices: Vec<SystemMatrix> = n_projs
        .iter()
        .map(|&np| ProjectionGeometry::square(n, cfg.n_det, cfg.theta_max, np).map(|g| build_system_matrix(&g)))
        .collect::<Result<_>>()?;

    let (nk, nm, nt) = (cfg.k_values.len(), cfg.mu_values.len(), cfg.trials_per_cell);
    let outcomes: Vec<bool> = (0..nk * nm * nt)
        .into_par_iter()
        .with_max_len(1)
        .map(|idx| {
            let (ki, rest) = (idx / (nm * nt), idx % (nm * nt));
            let (mi, trial) = (rest / nt, rest % nt);
            phase_trial(cfg, &matrices[mi], ki, mi, trial)
        })
        .collect();

    let mut cells = Vec::with_capacity(nk * nm);
    for ki in 0..nk {
        for mi in 0..nm {
            let base = (ki * nm + mi) * nt;
            let n_recovered = outcomes[base..base + nt].iter().filter(|&&ok| ok).count();
            cells.push(PhaseDiagramCell {
                k: cfg.k_values[ki],
                mu: cfg.mu_values[mi],
                n_proj: n_projs[mi],
                n_trials: nt,
                n_recovered,
                fraction: n_recovered as f64 / nt as f64,
            });
        }
    }
    Ok(cells)
}

/// Sorted distinct k and μ values of a complete rectangular cell table,
/// with the fraction at each `(k, μ)` index.
struct Grid {
    ks: Vec<f64>,
    mus: Vec<f64>,
    fraction: Vec<Vec<f64>>,
}

fn to_grid(cells: &[PhaseDiagramCell]) -> Result<Grid> {
    let mut table: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for c in cells {
        if !(c.k.is_finite() && c.mu.is_finite()) {
            return Err(Error::param("cell coordinates must be finite"));
        }
        if table.insert((c.k.to_bits(), c.mu.to_bits()), c.fraction).is_some() {
            return Err(Error::param(format!("duplicate cell at k = {}, mu = {}", c.k, c.mu)));
        }
    }
    let sorted = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let ks = sorted(cells.iter().map(|c| c.k).collect());
    let mus = sorted(cells.iter().map(|c| c.mu).collect());
    if ks.len() * mus.len() != cells.len() {
        return Err(Error::param(format!(
            "cells do not form a complete grid: {} cells for {} k × {} mu values",
            cells.len(),
            ks.len(),
            mus.len()
        )));
    }
    let fraction = ks
        .iter()
        .map(|k| mus.iter().map(|mu| table[&(k.to_bits(), mu.to_bits())]).collect())
        .collect();
    Ok(Grid { ks, mus, fraction })
}

/// For each k, the smallest μ whose recovery fraction reaches `level`;
/// k values with no such μ are left out.
pub fn extract_transition_boundary(cells: &[PhaseDiagramCell], level: f64) -> Result<Vec<(f64, f64)>> {
    let grid = to_grid(cells)?;
    Ok(grid
        .ks
        .iter()
        .zip(&grid.fraction)
        .filter_map(|(&k, row)| row.iter().position(|&f| f >= level).map(|j| (k, grid.mus[j])))
        .collect())
}

/// Largest number of order violations on any single line of the grid:
/// adjacent pairs where the fraction rises with k at fixed μ, or falls
/// with μ at fixed k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotonicityReport {
    pub max_violations_along_k: usize,
    pub max_violations_along_mu: usize,
}

pub fn monotonicity_violations(cells: &[PhaseDiagramCell]) -> Result<MonotonicityReport> {
    let g = to_grid(cells)?;
    let (nk, nm) = (g.ks.len(), g.mus.len());
    let along_k = (0..nm)
        .map(|j| (1..nk).filter(|&i| g.fraction[i][j] > g.fraction[i - 1][j]).count())
        .max()
        .unwrap_or(0);
    let along_mu = (0..nk)
        .map(|i| (1..nm).filter(|&j| g.fraction[i][j] < g.fraction[i][j - 1]).count())
        .max()
        .unwrap_or(0);
    Ok(MonotonicityReport { max_violations_along_k: along_k, max_violations_along_mu: along_mu })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepSolver {
    L1(L1Options),
    Tv(TvOptions),
}

impl SweepSolver {
    fn solve(&self, a: &SystemMatrix, b: &Sinogram, epsilon: f64) -> Result<ReconResult> {
        match self {
            SweepSolver::L1(o) => solve_l1(a, b, &L1Options { epsilon, ..o.clone() }),
            SweepSolver::Tv(o) => solve_tv_asdpocs(a, b, &TvOptions { epsilon, ..o.clone() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub rmse: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl CsvRecord for SweepPoint {
    fn header() -> &'static [&'static str] {
        &["epsilon", "rmse", "converged", "iterations"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_sig(self.epsilon),
            fmt_sig(self.rmse),
            self.converged.to_string(),
            self.iterations.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSweep {
    pub curve: Vec<SweepPoint>,
    /// Index of the smallest RMSE in `curve` (first one on ties).
    pub best: usize,
    pub best_image: ImageGrid,
}

impl EpsilonSweep {
    pub fn best_point(&self) -> &SweepPoint {
        &self.curve[self.best]
    }
}

fn check_eps_grid(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() {
        return Err(Error::param("ε grid is empty"));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::param("ε grid values must be positive"));
    }
    if eps_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("ε grid must be sorted ascending"));
    }
    Ok(())
}

fn collect_sweep(eps_grid: &[f64], x_true: &ImageGrid, results: Vec<Result<ReconResult>>) -> Result<EpsilonSweep> {
    let mut curve = Vec::with_capacity(eps_grid.len());
    let mut images = Vec::with_capacity(eps_grid.len());
    for (&epsilon, r) in eps_grid.iter().zip(results) {
        let r = r?;
        curve.push(SweepPoint {
            epsilon,
            rmse: rmse(&r.image, x_true)?,
            converged: r.converged,
            iterations: r.iterations,
        });
        images.push(r.image);
    }
    let best = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.rmse.total_cmp(&b.1.rmse))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    Ok(EpsilonSweep { curve, best, best_image: images.swap_remove(best) })
}

/// One reconstruction per ε, in parallel; returns the RMSE curve and the
/// arg-min.
pub fn run_epsilon_sweep(
    a: &SystemMatrix,
    b_noisy: &Sinogram,
    x_true: &ImageGrid,
    eps_grid: &[f64],
    solver: &SweepSolver,
) -> Result<EpsilonSweep> {
    check_eps_grid(eps_grid)?;
    let results = eps_grid
        .par_iter()
        .with_max_len(1)
        .map(|&e| solver.solve(a, b_noisy, e))
        .collect();
    collect_sweep(eps_grid, x_true, results)
}

fn run_epsilon_sweep_serial(
    a: &SystemMatrix,
    b_noisy: &Sinogram,
    x_true: &ImageGrid,
    eps_grid: &[f64],
    solver: &SweepSolver,
) -> Result<EpsilonSweep> {
    check_eps_grid(eps_grid)?;
    let results = eps_grid.iter().map(|&e| solver.solve(a, b_noisy, e)).collect();
    collect_sweep(eps_grid, x_true, results)
}

/// Optimal-RMSE outcome of one noisy dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study: String,
    pub n_proj: usize,
    pub total_counts: f64,
    pub theta_max: f64,
    pub optimal_epsilon: f64,
    /// Infinite when the dataset could not be processed.
    pub optimal_rmse: f64,
    pub converged: bool,
    pub seed: u64,
    /// Seconds spent on this record; not written to CSV.
    pub wall_time: f64,
    pub error: Option<String>,
}

impl CsvRecord for StudyRecord {
    fn header() -> &'static [&'static str] {
        &[
            "study",
            "n_proj",
            "total_counts",
            "theta_max",
            "optimal_epsilon",
            "optimal_rmse",
            "converged",
            "seed",
            "error",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.study.clone(),
            self.n_proj.to_string(),
            fmt_sig(self.total_counts),
            fmt_sig(self.theta_max),
            fmt_sig(self.optimal_epsilon),
            fmt_sig(self.optimal_rmse),
            self.converged.to_string(),
            self.seed.to_string(),
            self.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        ]
    }
}

/// Settings shared by the dose and missing-wedge studies.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyStudyConfig {
    pub n_det: usize,
    pub eps_points: usize,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub tv: TvOptions,
    pub base_seed: u64,
}

impl Default for NoisyStudyConfig {
    fn default() -> Self {
        Self {
            n_det: 128,
            eps_points: EPS_GRID_POINTS,
            eps_lo: EPS_GRID_LO,
            eps_hi: EPS_GRID_HI,
            tv: TvOptions::default(),
            base_seed: 0,
        }
    }
}

impl NoisyStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_det == 0 {
            return Err(Error::param("n_det must be positive"));
        }
        epsilon_grid(1.0, self.eps_lo, self.eps_hi, self.eps_points)?;
        self.tv.validate()
    }
}

/// Seed of the Poisson draw for one `(N_e, N_p, θ)` dataset. The dose and
/// wedge studies share it, so equal settings give equal data.
pub fn noisy_data_seed(base_seed: u64, total_counts: f64, n_proj: usize, theta_max: f64) -> u64 {
    derive_seed(base_seed, TASK_NOISY_DATA, &[total_counts.to_bits(), n_proj as u64, theta_max.to_bits()])
}

/// Simulates one noisy dataset and records its optimal RMSE over the ε grid.
pub fn run_noisy_record(
    phantom: &ImageGrid,
    cfg: &NoisyStudyConfig,
    study: &str,
    total_counts: f64,
    n_proj: usize,
    theta_max: f64,
) -> StudyRecord {
    let start = Instant::now();
    let seed = noisy_data_seed(cfg.base_seed, total_counts, n_proj, theta_max);
    let outcome = (|| -> Result<(f64, f64, bool)> {
        if phantom.width() != phantom.height() {
            return Err(Error::param("studies need a square phantom"));
        }
        let g = ProjectionGeometry::square(phantom.width(), cfg.n_det, theta_max, n_proj)?;
        let a = build_system_matrix(&g);
        let b = simulate_ideal_data(&a, phantom)?;
        let noisy = apply_poisson_dose(&b, &DoseSpec::new(total_counts, seed)?)?;
        let scale = noise_norm_estimate(&noisy).filter(|&s| s > 0.0).ok_or_else(|| Error::param("no counts recorded"))?;
        let grid = epsilon_grid(scale, cfg.eps_lo, cfg.eps_hi, cfg.eps_points)?;
        let sweep = run_epsilon_sweep(&a, &noisy, phantom, &grid, &SweepSolver::Tv(cfg.tv.clone()))?;
        let best = sweep.best_point();
        Ok((best.epsilon, best.rmse, best.converged))
    })();
    let wall_time = start.elapsed().as_secs_f64();
    let base = StudyRecord {
        study: study.to_string(),
        n_proj,
        total_counts,
        theta_max,
        optimal_epsilon: f64::NAN,
        optimal_rmse: f64::INFINITY,
        converged: false,
        seed,
        wall_time,
        error: None,
    };
    match outcome {
        Ok((optimal_epsilon, optimal_rmse, converged)) => {
            StudyRecord { optimal_epsilon, optimal_rmse, converged, ..base }
        }
        Err(e) => StudyRecord { error: Some(e.to_string()), ..base },
    }
}

fn run_records(phantom: &ImageGrid, cfg: &NoisyStudyConfig, study: &str, cells: Vec<(f64, usize, f64)>) -> Vec<StudyRecord> {
    cells
        .into_par_iter()
        .with_max_len(1)
        .map(|(n_e, n_p, theta)| run_noisy_record(phantom, cfg, study, n_e, n_p, theta))
        .collect()
}

/// Optimal RMSE over the `(N_e, N_p)` grid at full tilt range, N_e-major.
pub fn run_dose_study(
    phantom: &ImageGrid,
    total_counts: &[f64],
    n_proj_values: &[usize],
    cfg: &NoisyStudyConfig,
) -> Result<Vec<StudyRecord>> {
    cfg.validate()?;
    if total_counts.is_empty() || n_proj_values.is_empty() {
        return Err(Error::param("dose study needs non-empty N_e and N_p lists"));
    }
    for &n_e in total_counts {
        DoseSpec::new(n_e, 0)?;
    }
    if n_proj_values.contains(&0) {
        return Err(Error::param("projection counts must be positive"));
    }
    let cells = total_counts
        .iter()
        .flat_map(|&n_e| n_proj_values.iter().map(move |&n_p| (n_e, n_p, 90.0)))
        .collect();
    Ok(run_records(phantom, cfg, "dose", cells))
}

/// Optimal RMSE over the `(θ, N_p)` grid at fixed N_e, θ-major.
pub fn run_wedge_study(
    phantom: &ImageGrid,
    total_counts: f64,
    theta_values: &[f64],
    n_proj_values: &[usize],
    cfg: &NoisyStudyConfig,
) -> Result<Vec<StudyRecord>> {
    cfg.validate()?;
    DoseSpec::new(total_counts, 0)?;
    if theta_values.is_empty() || n_proj_values.is_empty() {
        return Err(Error::param("wedge study needs non-empty θ and N_p lists"));
    }
    if let Some(t) = theta_values.iter().find(|&&t| !(t > 0.0 && t <= 90.0)) {
        return Err(Error::param(format!("tilt range must lie in (0, 90], got {t}")));
    }
    if n_proj_values.contains(&0) {
        return Err(Error::param("projection counts must be positive"));
    }
    let cells = theta_values
        .iter()
        .flat_map(|&t| n_proj_values.iter().map(move |&n_p| (total_counts, n_p, t)))
        .collect();
    Ok(run_records(phantom, cfg, "wedge", cells))
}
