//! Run configuration: a flat TOML document of named keys.
//!
//! Every key is optional and falls back to the documented default. Unknown
//! keys are rejected, and every range check names the offending key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1::L1Options;
use crate::metrics::RecoveryRule;
use crate::phantom::{PhantomKind, PhantomSpec};
use crate::study::{NoisyStudyConfig, PhaseDiagramConfig, EPS_GRID_HI, EPS_GRID_LO, EPS_GRID_POINTS};
use crate::tv::TvOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomChoice {
    PixelSparse,
    PtcLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    L1,
    Tv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub base_seed: u64,

    // geometry
    pub size: usize,
    pub n_det: usize,
    pub n_proj: usize,
    pub theta_max: f64,

    // phantom
    pub phantom: PhantomChoice,
    pub k: f64,
    pub carbon_level: f64,
    pub particle_level: f64,
    pub gradient_sparsity: f64,

    // data
    pub total_counts: Option<f64>,

    // reconstruction
    pub solver: SolverChoice,
    pub epsilon: f64,
    pub nonneg: bool,
    pub l1_max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub beta0: f64,
    pub beta_red: f64,
    pub n_tv_steps: usize,
    pub alpha0: f64,
    pub alpha_red: f64,
    pub r_max: f64,
    pub delta: f64,
    pub c_alpha_stop: f64,
    pub resid_rel_stop: f64,
    pub tv_max_iters: usize,

    // studies
    pub k_values: Vec<f64>,
    pub mu_values: Vec<f64>,
    pub trials_per_cell: usize,
    pub rmse_threshold: f64,
    pub total_counts_values: Vec<f64>,
    pub n_proj_values: Vec<usize>,
    pub theta_values: Vec<f64>,
    pub eps_points: usize,
    pub eps_lo: f64,
    pub eps_hi: f64,

    // output
    pub window_lo: f64,
    pub window_hi: f64,
    pub pgm_ascii: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tv = TvOptions::default();
        let l1 = L1Options::default();
        let phase = PhaseDiagramConfig::default();
        let ptc = PhantomSpec::ptc_like(128, 0);
        Self {
            base_seed: 0,
            size: 128,
            n_det: 128,
            n_proj: 40,
            theta_max: 90.0,
            phantom: PhantomChoice::PtcLike,
            k: 0.1,
            carbon_level: ptc.carbon_level,
            particle_level: ptc.particle_level,
            gradient_sparsity: ptc.gradient_sparsity_target,
            total_counts: None,
            solver: SolverChoice::Tv,
            epsilon: 1e-5,
            nonneg: l1.nonneg,
            l1_max_iters: l1.max_iters,
            tol_primal: l1.tol_primal,
            tol_dual: l1.tol_dual,
            beta0: tv.beta0,
            beta_red: tv.beta_red,
            n_tv_steps: tv.n_tv_steps,
            alpha0: tv.alpha0,
            alpha_red: tv.alpha_red,
            r_max: tv.r_max,
            delta: tv.delta,
            c_alpha_stop: tv.c_alpha_stop,
            resid_rel_stop: tv.resid_rel_stop,
            tv_max_iters: tv.max_iters,
            k_values: phase.k_values,
            mu_values: phase.mu_values,
            trials_per_cell: phase.trials_per_cell,
            rmse_threshold: RecoveryRule::default().rmse_threshold,
            total_counts_values: vec![1.6e5, 6.4e5],
            n_proj_values: vec![40, 50, 60, 80],
            theta_values: vec![45.0, 60.0, 75.0, 90.0],
            eps_points: EPS_GRID_POINTS,
            eps_lo: EPS_GRID_LO,
            eps_hi: EPS_GRID_HI,
            window_lo: crate::io::DEFAULT_WINDOW.0,
            window_hi: crate::io::DEFAULT_WINDOW.1,
            pgm_ascii: false,
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| syntax_error(&e))?;
    cfg.validate()?;
    Ok(cfg)
}

fn syntax_error(e: &toml::de::Error) -> Error {
    let msg = e.message();
    // serde reports unknown keys as "unknown field `name`, expected ...".
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return Error::key(&rest[..end], "unknown key");
        }
    }
    Error::ConfigSyntax(e.to_string().trim_end().to_string())
}

/// Serializes a config back to TOML.
pub fn serialize_config(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config fields are all representable in TOML")
}

fn check(ok: bool, key: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::key(key, message))
    }
}

fn finite(v: f64) -> bool {
    v.is_finite()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.size > 0, "size", "must be positive")?;
        check(self.n_det > 0, "n_det", "must be positive")?;
        check(self.n_proj > 0, "n_proj", "must be positive")?;
        check(self.theta_max > 0.0 && self.theta_max <= 90.0, "theta_max", format!("must lie in (0, 90], got {}", self.theta_max))?;
        check(self.k > 0.0 && self.k <= 1.0, "k", format!("must lie in (0, 1], got {}", self.k))?;
        check(finite(self.carbon_level) && self.carbon_level > 0.0, "carbon_level", "must be positive")?;
        check(finite(self.particle_level) && self.particle_level > 0.0, "particle_level", "must be positive")?;
        check(self.carbon_level != self.particle_level, "particle_level", "must differ from carbon_level")?;
        check(self.gradient_sparsity > 0.0 && self.gradient_sparsity < 1.0, "gradient_sparsity", "must lie in (0, 1)")?;
        if let Some(n) = self.total_counts {
            check(finite(n) && n > 0.0, "total_counts", format!("must be positive, got {n}"))?;
        }
        check(finite(self.epsilon) && self.epsilon >= 0.0, "epsilon", format!("must be ≥ 0, got {}", self.epsilon))?;
        check(self.tol_primal > 0.0, "tol_primal", "must be positive")?;
        check(self.tol_dual > 0.0, "tol_dual", "must be positive")?;
        check(self.beta0 > 0.0 && self.beta0 < 2.0, "beta0", "must lie in (0, 2)")?;
        check(self.beta_red > 0.0 && self.beta_red < 1.0, "beta_red", "must lie in (0, 1)")?;
        check(finite(self.alpha0) && self.alpha0 >= 0.0, "alpha0", "must be ≥ 0")?;
        check(self.alpha_red > 0.0 && self.alpha_red <= 1.0, "alpha_red", "must lie in (0, 1]")?;
        check(finite(self.r_max) && self.r_max > 0.0, "r_max", "must be positive")?;
        check(finite(self.delta) && self.delta > 0.0, "delta", "must be positive")?;
        check(self.c_alpha_stop >= -1.0 && self.c_alpha_stop <= 1.0, "c_alpha_stop", "must lie in [-1, 1]")?;
        check(self.resid_rel_stop > 0.0, "resid_rel_stop", "must be positive")?;
        check(!self.k_values.is_empty(), "k_values", "must be non-empty")?;
        check(self.k_values.iter().all(|&k| k > 0.0 && k <= 1.0), "k_values", "entries must lie in (0, 1]")?;
        check(!self.mu_values.is_empty(), "mu_values", "must be non-empty")?;
        check(self.mu_values.iter().all(|&m| finite(m) && m > 0.0), "mu_values", "entries must be positive")?;
        check(self.trials_per_cell > 0, "trials_per_cell", "must be positive")?;
        check(finite(self.rmse_threshold) && self.rmse_threshold > 0.0, "rmse_threshold", "must be positive")?;
        check(!self.total_counts_values.is_empty(), "total_counts_values", "must be non-empty")?;
        check(
            self.total_counts_values.iter().all(|&n| finite(n) && n > 0.0),
            "total_counts_values",
            "entries must be positive",
        )?;
        check(!self.n_proj_values.is_empty(), "n_proj_values", "must be non-empty")?;
        check(self.n_proj_values.iter().all(|&n| n > 0), "n_proj_values", "entries must be positive")?;
        check(!self.theta_values.is_empty(), "theta_values", "must be non-empty")?;
        check(self.theta_values.iter().all(|&t| t > 0.0 && t <= 90.0), "theta_values", "entries must lie in (0, 90]")?;
        check(self.eps_points > 0, "eps_points", "must be positive")?;
        check(finite(self.eps_lo) && self.eps_lo > 0.0, "eps_lo", "must be positive")?;
        check(finite(self.eps_hi) && self.eps_hi >= self.eps_lo, "eps_hi", "must be ≥ eps_lo")?;
        check(finite(self.window_lo), "window_lo", "must be finite")?;
        check(finite(self.window_hi) && self.window_hi > self.window_lo, "window_hi", "must exceed window_lo")?;
        Ok(())
    }

    pub fn phantom_spec(&self, seed: u64) -> PhantomSpec {
        match self.phantom {
            PhantomChoice::PixelSparse => PhantomSpec::pixel_sparse(self.size, self.k, seed),
            PhantomChoice::PtcLike => PhantomSpec {
                kind: PhantomKind::PtcLike,
                carbon_level: self.carbon_level,
                particle_level: self.particle_level,
                gradient_sparsity_target: self.gradient_sparsity,
                ..PhantomSpec::ptc_like(self.size, seed)
            },
        }
    }

    pub fn l1_options(&self) -> L1Options {
        L1Options {
            epsilon: self.epsilon,
            nonneg: self.nonneg,
            max_iters: self.l1_max_iters,
            tol_primal: self.tol_primal,
            tol_dual: self.tol_dual,
            seed: self.base_seed,
        }
    }

    pub fn tv_options(&self) -> TvOptions {
        TvOptions {
            epsilon: self.epsilon,
            beta0: self.beta0,
            beta_red: self.beta_red,
            n_tv_steps: self.n_tv_steps,
            alpha0: self.alpha0,
            alpha_red: self.alpha_red,
            r_max: self.r_max,
            delta: self.delta,
            c_alpha_stop: self.c_alpha_stop,
            resid_rel_stop: self.resid_rel_stop,
            max_iters: self.tv_max_iters,
        }
    }

    pub fn phase_diagram_config(&self) -> PhaseDiagramConfig {
        PhaseDiagramConfig {
            grid_size: self.size,
            n_det: self.n_det,
            k_values: self.k_values.clone(),
            mu_values: self.mu_values.clone(),
            trials_per_cell: self.trials_per_cell,
            rule: RecoveryRule { rmse_threshold: self.rmse_threshold },
            noise: self.total_counts,
            theta_max: self.theta_max,
            base_seed: self.base_seed,
            l1: self.l1_options(),
            eps_points: self.eps_points,
        }
    }

    pub fn noisy_study_config(&self) -> NoisyStudyConfig {
        NoisyStudyConfig {
            n_det: self.n_det,
            eps_points: self.eps_points,
            eps_lo: self.eps_lo,
            eps_hi: self.eps_hi,
            tv: self.tv_options(),
            base_seed: self.base_seed,
        }
    }

    pub fn window(&self) -> (f64, f64) {
        (self.window_lo, self.window_hi)
    }
}
