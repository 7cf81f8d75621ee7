//! Ideal and Poisson-corrupted projection data.
//!
//! Detector counts are proportional to the line integrals and scaled so
//! that the expected total over the whole tilt series is `N_e`. Noisy data
//! is returned in line-integral units (counts divided by the scale) so the
//! same system matrix applies to ideal and noisy data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::projector::{forward_project, Sinogram, SystemMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseSpec {
    /// Total expected electron count `N_e` over all projections.
    pub total_counts: f64,
    pub seed: u64,
}

impl DoseSpec {
    pub fn new(total_counts: f64, seed: u64) -> Result<Self> {
        if !(total_counts > 0.0 && total_counts.is_finite()) {
            return Err(Error::param(format!(
                "total electron count must be positive, got {total_counts}"
            )));
        }
        Ok(Self { total_counts, seed })
    }
}

/// `b = A x` with no noise.
pub fn simulate_ideal_data(a: &SystemMatrix, x_true: &ImageGrid) -> Result<Sinogram> {
    forward_project(a, x_true)
}

/// Counts-per-unit-line-integral scale `s = N_e / Σ b_i`.
pub fn dose_scale(b: &Sinogram, total_counts: f64) -> Result<f64> {
    let total: f64 = b.values().iter().sum();
    if !(total > 0.0) {
        return Err(Error::param("projection data sums to zero; dose cannot be scaled"));
    }
    Ok(total_counts / total)
}

/// Draws `Poisson(s·b_i)/s` independently for every ray.
pub fn apply_poisson_dose(b_clean: &Sinogram, dose: &DoseSpec) -> Result<Sinogram> {
    if b_clean.is_noisy() {
        return Err(Error::param("Poisson dose must be applied to ideal data"));
    }
    if b_clean.values().iter().any(|&v| v < 0.0) {
        return Err(Error::param("ideal data has negative line integrals"));
    }
    let DoseSpec { total_counts, seed } = DoseSpec::new(dose.total_counts, dose.seed)?;
    let scale = dose_scale(b_clean, total_counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(b_clean.len());
    for &v in b_clean.values() {
        let lambda = scale * v;
        let counts = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::param(format!("Poisson mean {lambda}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        values.push(counts / scale);
    }
    Sinogram::with_metadata(
        b_clean.n_proj(),
        b_clean.n_det(),
        values,
        Some(total_counts),
        true,
    )
}

/// `‖b_clean‖ / ‖b_noisy − b_clean‖`; infinite when the two agree exactly.
pub fn measure_snr(b_clean: &Sinogram, b_noisy: &Sinogram) -> Result<f64> {
    if b_clean.len() != b_noisy.len() {
        return Err(Error::dim("sinogram values", b_clean.len(), b_noisy.len()));
    }
    let noise = crate::metrics::dist2(b_clean.values(), b_noisy.values());
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(b_clean.norm() / noise)
}

/// Expected noise norm `‖b_noisy − b_clean‖` implied by the dose metadata:
/// each ray has variance `b_i/s`, so the total is `Σ b_i / √N_e`.
/// `None` for data without a dose.
pub fn noise_norm_estimate(b: &Sinogram) -> Option<f64> {
    let dose = b.dose()?;
    let total: f64 = b.values().iter().map(|v| v.max(0.0)).sum();
    Some(total / dose.sqrt())
}
