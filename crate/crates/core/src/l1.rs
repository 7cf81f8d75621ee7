//! Basis pursuit: `min ‖x‖₁  s.t.  ‖Ax − b‖₂ ≤ ε`, optionally with `x ≥ 0`.
//!
//! Solved with the primal–dual hybrid gradient method of Chambolle and Pock
//! on the saddle problem `min_x max_y ‖x‖₁ + ⟨Ax, y⟩ − F*(y)`, where `F` is
//! the indicator of the ε-ball around `b`. The prox of `F*` is a shrinkage
//! of the dual variable, so `ε = 0` and `ε > 0` share one code path.
//!
//! Step sizes are `τ = η/ω`, `σ = ηω` with `η = 0.98/‖A‖`. The iteration is
//! restarted from the better of the current and the averaged iterate when
//! the KKT error has dropped enough, and the primal weight `ω` is updated at
//! each restart from the distance travelled by both variables.

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::metrics::{dist2, norm2};
use crate::projector::{estimate_operator_norm, Sinogram, SystemMatrix};
use crate::recon::{IterationRecord, ReconResult};

#[derive(Debug, Clone, PartialEq)]
pub struct L1Options {
    /// Data tolerance; zero asks for `Ax = b`.
    pub epsilon: f64,
    pub nonneg: bool,
    pub max_iters: usize,
    /// Relative tolerance on the data constraint violation (relative to `‖b‖`).
    pub tol_primal: f64,
    /// Relative tolerance on dual infeasibility and on the duality gap.
    pub tol_dual: f64,
    /// Seed for the power-iteration start vector.
    pub seed: u64,
}

impl Default for L1Options {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            nonneg: true,
            max_iters: 20_000,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            seed: 0,
        }
    }
}

impl L1Options {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::param("convergence tolerances must be positive"));
        }
        Ok(())
    }
}

const NORM_ITERATIONS: usize = 60;
const CHECK_EVERY: usize = 64;
const RESTART_SUFFICIENT: f64 = 0.2;
const RESTART_NECESSARY: f64 = 0.8;
const RESTART_ARTIFICIAL: f64 = 0.36;

/// A primal–dual point with its cached products.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    ax: Vec<f64>,
    aty: Vec<f64>,
}

impl Point {
    fn zeros(n: usize, m: usize) -> Self {
        Self { x: vec![0.0; n], y: vec![0.0; m], ax: vec![0.0; m], aty: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, Copy)]
struct Kkt {
    residual: f64,
    primal_inf: f64,
    dual_inf: f64,
    gap: f64,
    objective: f64,
    dual_objective: f64,
}

impl Kkt {
    fn error(&self) -> f64 {
        (self.primal_inf.powi(2) + self.dual_inf.powi(2) + self.gap.powi(2)).sqrt()
    }
}

struct Problem<'a> {
    b: &'a [f64],
    eps: f64,
    nonneg: bool,
}

impl Problem<'_> {
    fn kkt(&self, p: &Point) -> Kkt {
        let residual = dist2(&p.ax, self.b);
        let primal_inf = (residual - self.eps).max(0.0);
        // Dual feasibility: 1 + Aᵀy ≥ 0 (nonneg) or |Aᵀy| ≤ 1.
        let dual_inf = p
            .aty
            .iter()
            .map(|&g| if self.nonneg { (-(1.0 + g)).max(0.0) } else { (g.abs() - 1.0).max(0.0) })
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        let objective: f64 = p.x.iter().map(|v| v.abs()).sum();
        let yb: f64 = p.y.iter().zip(self.b).map(|(a, b)| a * b).sum();
        let dual_objective = -yb - self.eps * norm2(&p.y);
        Kkt {
            residual,
            primal_inf,
            dual_inf,
            gap: (objective - dual_objective).abs(),
            objective,
            dual_objective,
        }
    }
}

pub fn solve_l1(a: &SystemMatrix, b: &Sinogram, opts: &L1Options) -> Result<ReconResult> {
    opts.validate()?;
    if b.len() != a.n_rows() {
        return Err(Error::dim("sinogram values", a.n_rows(), b.len()));
    }
    let (n, m) = (a.n_cols(), a.n_rows());
    let bv = b.values();
    let b_norm = norm2(bv);
    let eps = opts.epsilon;

    if eps >= b_norm {
        return Ok(ReconResult {
            image: ImageGrid::zeros(a.width(), a.height())?,
            iterations: 0,
            residual_norm: b_norm,
            objective: 0.0,
            converged: true,
            diagnostics: Vec::new(),
        });
    }

    let op_norm = estimate_operator_norm(a, NORM_ITERATIONS, opts.seed) * 1.02;
    if op_norm == 0.0 {
        return Err(Error::param("system matrix is zero"));
    }
    let eta = 0.98 / op_norm;
    let mut omega = (n as f64).sqrt() / b_norm;

    let problem = Problem { b: bv, eps, nonneg: opts.nonneg };
    let converged_at = |k: &Kkt| {
        k.primal_inf <= opts.tol_primal * b_norm
            && k.dual_inf <= opts.tol_dual * (n as f64).sqrt()
            && k.gap <= opts.tol_dual * (k.objective.abs() + k.dual_objective.abs()).max(f64::MIN_POSITIVE)
    };

    let mut cur = Point::zeros(n, m);
    let mut next = Point::zeros(n, m);
    let mut sum = Point::zeros(n, m);
    let mut avg = Point::zeros(n, m);
    let mut anchor = cur.clone();
    let mut since_restart = 0usize;
    let mut kkt_anchor = problem.kkt(&anchor).error();
    let mut kkt_prev_candidate = f64::INFINITY;

    let mut diagnostics: Vec<IterationRecord> = Vec::with_capacity(opts.max_iters.min(1 << 16));
    let mut converged = false;
    let mut result = None;

    for it in 1..=opts.max_iters {
        let tau = eta / omega;
        let sigma = eta * omega;

        for j in 0..n {
            let v = cur.x[j] - tau * cur.aty[j];
            next.x[j] = if opts.nonneg {
                (v - tau).max(0.0)
            } else {
                v.signum() * (v.abs() - tau).max(0.0)
            };
        }
        a.apply(&next.x, &mut next.ax);

        // y ← prox_{σF*}(y + σ A(2x_new − x)).
        if eps == 0.0 {
            for i in 0..m {
                next.y[i] = cur.y[i] + sigma * (2.0 * next.ax[i] - cur.ax[i] - bv[i]);
            }
        } else {
            let mut w_norm_sq = 0.0;
            for i in 0..m {
                let w = cur.y[i] / sigma + 2.0 * next.ax[i] - cur.ax[i] - bv[i];
                next.y[i] = w;
                w_norm_sq += w * w;
            }
            let w_norm = w_norm_sq.sqrt();
            let shrink = if w_norm > eps { sigma * (1.0 - eps / w_norm) } else { 0.0 };
            for yi in next.y.iter_mut() {
                *yi *= shrink;
            }
        }
        a.apply_adjoint(&next.y, &mut next.aty);
        std::mem::swap(&mut cur, &mut next);

        add_into(&mut sum.x, &cur.x);
        add_into(&mut sum.y, &cur.y);
        add_into(&mut sum.ax, &cur.ax);
        add_into(&mut sum.aty, &cur.aty);
        since_restart += 1;

        diagnostics.push(IterationRecord {
            iteration: it,
            residual: dist2(&cur.ax, bv),
            objective: cur.x.iter().map(|v| v.abs()).sum(),
            c_alpha: None,
            beta: None,
            alpha: None,
        });

        if it % CHECK_EVERY != 0 && it != opts.max_iters {
            continue;
        }

        let inv = 1.0 / since_restart as f64;
        scale_into(&mut avg.x, &sum.x, inv);
        scale_into(&mut avg.y, &sum.y, inv);
        scale_into(&mut avg.ax, &sum.ax, inv);
        scale_into(&mut avg.aty, &sum.aty, inv);
        let (k_cur, k_avg) = (problem.kkt(&cur), problem.kkt(&avg));
        let use_avg = k_avg.error() < k_cur.error();
        let k_cand = if use_avg { k_avg } else { k_cur };

        if converged_at(&k_cand) || it == opts.max_iters {
            converged = converged_at(&k_cand);
            let point = if use_avg { &avg } else { &cur };
            if let Some(last) = diagnostics.last_mut() {
                last.residual = k_cand.residual;
                last.objective = k_cand.objective;
            }
            result = Some(point.x.clone());
            break;
        }

        let e = k_cand.error();
        let restart = e <= RESTART_SUFFICIENT * kkt_anchor
            || (e <= RESTART_NECESSARY * kkt_anchor && e > kkt_prev_candidate)
            || since_restart as f64 >= RESTART_ARTIFICIAL * it as f64;
        kkt_prev_candidate = e;
        if !restart {
            continue;
        }

        if use_avg {
            cur.clone_from(&avg);
        }
        let dx = dist2(&cur.x, &anchor.x);
        let dy = dist2(&cur.y, &anchor.y);
        if dx > 1e-12 * (1.0 + norm2(&cur.x)) && dy > 1e-12 * (1.0 + norm2(&cur.y)) {
            omega = (0.5 * (dy / dx).ln() + 0.5 * omega.ln()).exp();
        }
        anchor.clone_from(&cur);
        kkt_anchor = e;
        kkt_prev_candidate = f64::INFINITY;
        since_restart = 0;
        for v in [&mut sum.x, &mut sum.y, &mut sum.ax, &mut sum.aty] {
            v.fill(0.0);
        }
    }

    let x = result.unwrap_or(cur.x);
    let iterations = diagnostics.len();
    let last = diagnostics.last().copied();
    Ok(ReconResult {
        image: ImageGrid::from_values(a.width(), a.height(), x)?,
        iterations,
        residual_norm: last.map_or(b_norm, |r| r.residual),
        objective: last.map_or(0.0, |r| r.objective),
        converged,
        diagnostics,
    })
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

fn scale_into(out: &mut [f64], v: &[f64], s: f64) {
    out.iter_mut().zip(v).for_each(|(o, x)| *o = x * s);
}
