//! Image grids, tilt schedules and the parallel-beam detector layout.
//!
//! Pixels and detector bins are one grid unit wide. The image is centered
//! on the origin with row 0 at the top (largest `y`), so pixel `(r, c)`
//! covers `x ∈ [c − W/2, c + 1 − W/2]` and `y ∈ [H/2 − r − 1, H/2 − r]`.

use crate::error::{Error, Result};

/// A 2D image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub const PIXEL_SIZE: f64 = 1.0;

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        check_dims(width, height)?;
        Self::from_values(width, height, vec![value; width * height])
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::dim("image values", width * height, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("image value at index {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds an image from a closure evaluated at every `(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::from_values(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the pixel buffer; callers must keep values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Center of pixel `(row, col)` in grid coordinates.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            col as f64 + 0.5 - self.width as f64 / 2.0,
            self.height as f64 / 2.0 - row as f64 - 0.5,
        )
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Projection angles evenly spaced over `[−θ, θ)`, in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSchedule {
    theta_max: f64,
    angles: Vec<f64>,
}

impl TiltSchedule {
    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn n_proj(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// True when the schedule spans the full ±90° range.
    pub fn is_full_range(&self) -> bool {
        self.theta_max == 90.0
    }
}

/// Evenly spaced tilt angles over `[−theta_max, theta_max)`.
///
/// The upper endpoint is excluded, `angle_i = −θ + i·2θ/n`, so a full ±90°
/// schedule never measures the same parallel ray set twice.
pub fn make_tilt_schedule(theta_max: f64, n_proj: usize) -> Result<TiltSchedule> {
    if !(theta_max > 0.0 && theta_max <= 90.0) {
        return Err(Error::param(format!(
            "theta_max must lie in (0, 90] degrees, got {theta_max}"
        )));
    }
    if n_proj == 0 {
        return Err(Error::param("a tilt schedule needs at least one projection"));
    }
    let step = 2.0 * theta_max / n_proj as f64;
    let angles = (0..n_proj).map(|i| -theta_max + i as f64 * step).collect();
    Ok(TiltSchedule { theta_max, angles })
}

/// Counting bound on the projection number that can give a full-rank
/// system matrix: `ceil(width·height / n_det)`.
pub fn sufficient_projection_number(width: usize, height: usize, n_det: usize) -> Result<usize> {
    if width == 0 || height == 0 || n_det == 0 {
        return Err(Error::param(format!(
            "dimensions must be positive, got {width}x{height} with {n_det} detector bins"
        )));
    }
    Ok((width * height).div_ceil(n_det))
}

/// Relative sampling `μ = N_p / N_suff`.
pub fn relative_sampling(n_proj: usize, n_suff: usize) -> f64 {
    n_proj as f64 / n_suff as f64
}

/// Projection count for a relative sampling `μ`, rounded and at least one.
pub fn projections_for_sampling(mu: f64, n_suff: usize) -> usize {
    ((mu * n_suff as f64).round() as usize).max(1)
}

/// Full parallel-beam geometry: grid shape, detector and tilt schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGeometry {
    pub width: usize,
    pub height: usize,
    pub n_det: usize,
    pub schedule: TiltSchedule,
}

impl ProjectionGeometry {
    pub const DET_SPACING: f64 = 1.0;

    pub fn new(width: usize, height: usize, n_det: usize, schedule: TiltSchedule) -> Result<Self> {
        check_dims(width, height)?;
        if n_det == 0 {
            return Err(Error::param("detector needs at least one bin"));
        }
        Ok(Self {
            width,
            height,
            n_det,
            schedule,
        })
    }

    /// Square-grid geometry with a fresh tilt schedule.
    pub fn square(size: usize, n_det: usize, theta_max: f64, n_proj: usize) -> Result<Self> {
        Self::new(size, size, n_det, make_tilt_schedule(theta_max, n_proj)?)
    }

    pub fn n_rays(&self) -> usize {
        self.n_det * self.schedule.n_proj()
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Signed offset of bin `d` from the detector center.
    pub fn bin_offset(&self, d: usize) -> f64 {
        detector_offset(self.n_det, d)
    }
}

pub(crate) fn detector_offset(n_det: usize, d: usize) -> f64 {
    (d as f64 - (n_det as f64 - 1.0) / 2.0) * ProjectionGeometry::DET_SPACING
}
