//! Reconstruction quality metrics and the shared finite-difference stencil.
//!
//! All gradients use forward differences with a replicated boundary, so the
//! last column has zero horizontal difference and the last row zero vertical
//! difference. `tv::tv_norm` uses the same stencil.

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;

/// Accuracy criterion for a reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryRule {
    pub rmse_threshold: f64,
}

impl Default for RecoveryRule {
    fn default() -> Self {
        Self { rmse_threshold: 0.05 }
    }
}

impl RecoveryRule {
    pub fn new(rmse_threshold: f64) -> Result<Self> {
        if !(rmse_threshold > 0.0 && rmse_threshold.is_finite()) {
            return Err(Error::param(format!(
                "rmse threshold must be positive, got {rmse_threshold}"
            )));
        }
        Ok(Self { rmse_threshold })
    }
}

pub fn rmse(x: &ImageGrid, x_ref: &ImageGrid) -> Result<f64> {
    if !x.same_shape(x_ref) {
        return Err(Error::dim("image pixels", x_ref.len(), x.len()));
    }
    Ok(rmse_slices(x.values(), x_ref.values()))
}

pub(crate) fn rmse_slices(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (ss / a.len() as f64).sqrt()
}

pub fn is_recovered(x: &ImageGrid, x_ref: &ImageGrid, rule: RecoveryRule) -> Result<bool> {
    Ok(rmse(x, x_ref)? <= rule.rmse_threshold)
}

/// Forward differences `(∂x, ∂y)` at pixel `(r, c)`.
#[inline]
pub(crate) fn forward_diff(v: &[f64], width: usize, height: usize, r: usize, c: usize) -> (f64, f64) {
    let i = r * width + c;
    let dx = if c + 1 < width { v[i + 1] - v[i] } else { 0.0 };
    let dy = if r + 1 < height { v[i + width] - v[i] } else { 0.0 };
    (dx, dy)
}

/// Per-pixel `‖∇x‖₂`.
pub fn gradient_magnitude(x: &ImageGrid) -> ImageGrid {
    let (w, h) = (x.width(), x.height());
    let v = x.values();
    ImageGrid::from_fn(w, h, |r, c| {
        let (dx, dy) = forward_diff(v, w, h, r, c);
        (dx * dx + dy * dy).sqrt()
    })
    .expect("gradient of a valid image is valid")
}

/// Fraction of pixels with non-zero gradient magnitude.
pub fn gradient_sparsity(x: &ImageGrid) -> f64 {
    crate::phantom::pixel_sparsity(&gradient_magnitude(x))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
