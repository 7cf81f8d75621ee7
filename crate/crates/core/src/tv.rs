//! Total-variation minimization under a data constraint with ASD-POCS:
//! `min ‖x‖_TV  s.t.  ‖Ax − b‖₂ ≤ ε, x ≥ 0`.
//!
//! Each outer iteration runs one ART sweep and a nonnegativity projection
//! (the POCS step), then a few normalized steepest-descent steps on the
//! smoothed TV whose length is tied to the size of the first POCS step. The
//! TV step scale shrinks while it dominates the POCS step and the data are
//! still outside the ε-ball, and whenever a round of descent steps raises the
//! TV; the ART relaxation decays geometrically.

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::metrics::{dist2, dot, forward_diff, norm2};
use crate::projector::{Sinogram, SystemMatrix};
use crate::recon::{IterationRecord, ReconResult};

#[derive(Debug, Clone, PartialEq)]
pub struct TvOptions {
    pub epsilon: f64,
    pub beta0: f64,
    pub beta_red: f64,
    pub n_tv_steps: usize,
    pub alpha0: f64,
    pub alpha_red: f64,
    pub r_max: f64,
    pub delta: f64,
    pub c_alpha_stop: f64,
    pub resid_rel_stop: f64,
    pub max_iters: usize,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            beta0: 1.0,
            beta_red: 0.995,
            n_tv_steps: 20,
            alpha0: 0.2,
            alpha_red: 0.95,
            r_max: 0.95,
            delta: 1e-8,
            c_alpha_stop: -0.95,
            resid_rel_stop: 1e-4,
            max_iters: 10_000,
        }
    }
}

/// Residual below which an `ε = 0` run counts as consistent.
pub const ZERO_EPSILON_RESIDUAL: f64 = 1e-8;

impl TvOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if !(self.beta0 > 0.0 && self.beta0 < 2.0) {
            return Err(Error::param(format!("beta0 must lie in (0, 2), got {}", self.beta0)));
        }
        if !(self.beta_red > 0.0 && self.beta_red < 1.0) {
            return Err(Error::param(format!("beta_red must lie in (0, 1), got {}", self.beta_red)));
        }
        if !(self.alpha_red > 0.0 && self.alpha_red <= 1.0) {
            return Err(Error::param(format!("alpha_red must lie in (0, 1], got {}", self.alpha_red)));
        }
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return Err(Error::param(format!("alpha0 must be ≥ 0, got {}", self.alpha0)));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::param(format!("r_max must be > 0, got {}", self.r_max)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::param(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(self.resid_rel_stop > 0.0) {
            return Err(Error::param("resid_rel_stop must be > 0"));
        }
        Ok(())
    }
}

/// `Σ √((∂x)² + (∂y)² + δ²)` with forward differences and a replicated
/// boundary. `δ = 0` gives the exact TV.
pub fn tv_norm(x: &ImageGrid, delta: f64) -> f64 {
    tv_norm_slice(x.values(), x.width(), x.height(), delta)
}

fn tv_norm_slice(v: &[f64], w: usize, h: usize, delta: f64) -> f64 {
    let d2 = delta * delta;
    let mut sum = 0.0;
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = forward_diff(v, w, h, r, c);
            sum += (dx * dx + dy * dy + d2).sqrt();
        }
    }
    sum
}

/// Gradient of the δ-smoothed TV. Pixels with a vanishing smoothed
/// magnitude (only possible for `δ = 0`) contribute nothing.
pub fn tv_gradient(x: &ImageGrid, delta: f64) -> ImageGrid {
    let mut g = ImageGrid::zeros(x.width(), x.height()).expect("valid shape");
    tv_gradient_into(x.values(), x.width(), x.height(), delta, g.values_mut());
    g
}

/// Writes the gradient into `out` and returns the smoothed TV itself.
fn tv_gradient_into(v: &[f64], w: usize, h: usize, delta: f64, out: &mut [f64]) -> f64 {
    let d2 = delta * delta;
    let mut tv = 0.0;
    out.fill(0.0);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let (dx, dy) = forward_diff(v, w, h, r, c);
            let m = (dx * dx + dy * dy + d2).sqrt();
            tv += m;
            if m == 0.0 {
                continue;
            }
            let (gx, gy) = (dx / m, dy / m);
            out[i] -= gx + gy;
            if c + 1 < w {
                out[i + 1] += gx;
            }
            if r + 1 < h {
                out[i + w] += gy;
            }
        }
    }
    tv
}

/// Cosine of the angle between the data step and the TV step; 0 when
/// either is zero.
///
/// # Panics
/// If the shapes differ.
pub fn cosine_alpha(d_data: &ImageGrid, d_tv: &ImageGrid) -> f64 {
    assert!(d_data.same_shape(d_tv), "cosine_alpha needs equal shapes");
    cosine_slices(d_data.values(), d_tv.values())
}

fn cosine_slices(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm2(a), norm2(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// One ART sweep in row order with relaxation `beta`.
fn art_sweep(a: &SystemMatrix, b: &[f64], beta: f64, x: &mut [f64]) {
    for (i, &bi) in b.iter().enumerate() {
        let nsq = a.row_norm_sq(i);
        if nsq == 0.0 {
            continue;
        }
        let (cols, vals) = a.row(i);
        let ax: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
        let step = beta * (bi - ax) / nsq;
        for (&c, &v) in cols.iter().zip(vals) {
            x[c as usize] += step * v;
        }
    }
}

pub fn solve_tv_asdpocs(a: &SystemMatrix, b: &Sinogram, opts: &TvOptions) -> Result<ReconResult> {
    opts.validate()?;
    if b.len() != a.n_rows() {
        return Err(Error::dim("sinogram values", a.n_rows(), b.len()));
    }
    let (w, h) = (a.width(), a.height());
    let (n, m) = (a.n_cols(), a.n_rows());
    let bv = b.values();
    let eps = opts.epsilon;

    let mut x = vec![0.0; n];
    let mut x_prev = vec![0.0; n];
    let mut x_pocs = vec![0.0; n];
    let mut r = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut d_data_vec = vec![0.0; n];
    let mut d_tv_vec = vec![0.0; n];

    let mut beta = opts.beta0;
    let mut alpha = opts.alpha0;
    // TV step length is α times the first data step.
    let mut step_unit = 0.0;
    let mut diagnostics = Vec::new();
    let mut converged = false;

    for it in 1..=opts.max_iters {
        // POCS step: ART sweep, then positivity.
        x_prev.copy_from_slice(&x);
        art_sweep(a, bv, beta, &mut x);
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        x_pocs.copy_from_slice(&x);
        residual_into(a, &x_pocs, bv, &mut r);
        let residual = norm2(&r);
        let d_data = dist2(&x_pocs, &x_prev);
        if it == 1 {
            step_unit = d_data;
        }

        let step = alpha * step_unit;
        let tv_start = tv_gradient_into(&x, w, h, opts.delta, &mut grad);
        let mut tv_here = tv_start;
        for _ in 0..opts.n_tv_steps {
            let gn = norm2(&grad);
            if gn == 0.0 {
                break;
            }
            let s = step / gn;
            x.iter_mut().zip(&grad).for_each(|(v, g)| *v -= s * g);
            let tv_next = tv_gradient_into(&x, w, h, opts.delta, &mut grad);
            // The smoothed TV has an (8/δ)-Lipschitz gradient, so steps up to
            // δ·|g|/4 are guaranteed descent steps.
            if step <= opts.delta * gn / 4.0 {
                debug_assert!(tv_next <= tv_here * (1.0 + 1e-12), "TV sub-step ascended: {tv_here} -> {tv_next}");
            }
            tv_here = tv_next;
        }
        let d_tv = dist2(&x, &x_pocs);

        let (beta_used, alpha_used) = (beta, alpha);
        beta *= opts.beta_red;
        // Shrink the TV step while it outweighs the data step away from the
        // ball, or when it failed to lower the TV at all.
        if (d_tv > opts.r_max * d_data && residual > eps) || tv_here > tv_start {
            alpha *= opts.alpha_red;
        }

        for j in 0..n {
            d_data_vec[j] = x_pocs[j] - x_prev[j];
            d_tv_vec[j] = x[j] - x_pocs[j];
        }
        let c_alpha = cosine_slices(&d_data_vec, &d_tv_vec);

        diagnostics.push(IterationRecord {
            iteration: it,
            residual,
            objective: tv_norm_slice(&x_pocs, w, h, 0.0),
            c_alpha: Some(c_alpha),
            beta: Some(beta_used),
            alpha: Some(alpha_used),
        });

        let on_target = if eps > 0.0 {
            (residual - eps).abs() / eps <= opts.resid_rel_stop
        } else {
            residual <= ZERO_EPSILON_RESIDUAL
        };
        if c_alpha <= opts.c_alpha_stop && on_target {
            converged = true;
            break;
        }
    }

    let iterations = diagnostics.len();
    let last = diagnostics.last().copied();
    let b_norm = norm2(bv);
    Ok(ReconResult {
        image: ImageGrid::from_values(w, h, x_pocs)?,
        iterations,
        residual_norm: last.map_or(b_norm, |r| r.residual),
        objective: last.map_or(0.0, |r| r.objective),
        converged,
        diagnostics,
    })
}

fn residual_into(a: &SystemMatrix, x: &[f64], b: &[f64], out: &mut [f64]) {
    a.apply(x, out);
    out.iter_mut().zip(b).for_each(|(r, bi)| *r -= bi);
}

