//! Test objects for the reconstruction studies.
//!
//! Pixel-sparse phantoms are unions of random discs grown until the
//! non-zero fraction equals the requested `k`. Pt/C-like phantoms mimic a
//! porous carbon support (level 0.03) decorated with small platinum
//! particles (level 0.75) on a zero background, with the pore count tuned
//! so the gradient-magnitude image has the requested sparsity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;

/// Allowed deviation of the achieved pixel sparsity from `k_target`.
pub const PIXEL_SPARSITY_TOLERANCE: f64 = 0.005;
/// Allowed deviation of the achieved gradient sparsity from its target.
pub const GRADIENT_SPARSITY_TOLERANCE: f64 = 0.01;

const PTC_MIN_SIZE: usize = 16;
const MAX_PORE_ATTEMPTS: usize = 5000;
const MAX_PLACEMENT_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    PixelSparse,
    PtcLike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub width: usize,
    pub height: usize,
    /// Non-zero pixel fraction, pixel-sparse phantoms only.
    pub k_target: f64,
    pub seed: u64,
    pub carbon_level: f64,
    pub particle_level: f64,
    /// Gradient-magnitude sparsity, Pt/C-like phantoms only.
    pub gradient_sparsity_target: f64,
}

impl PhantomSpec {
    pub fn pixel_sparse(size: usize, k_target: f64, seed: u64) -> Self {
        Self {
            kind: PhantomKind::PixelSparse,
            width: size,
            height: size,
            k_target,
            seed,
            ..Self::ptc_like(size, seed)
        }
    }

    pub fn ptc_like(size: usize, seed: u64) -> Self {
        Self {
            kind: PhantomKind::PtcLike,
            width: size,
            height: size,
            k_target: 1.0,
            seed,
            carbon_level: 0.03,
            particle_level: 0.75,
            gradient_sparsity_target: 0.033,
        }
    }
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &PhantomSpec) -> Result<ImageGrid> {
    match spec.kind {
        PhantomKind::PixelSparse => generate_pixel_sparse(spec),
        PhantomKind::PtcLike => generate_ptc_like(spec),
    }
}

/// Fraction of pixels with `|x| > 0`.
pub fn pixel_sparsity(x: &ImageGrid) -> f64 {
    x.values().iter().filter(|v| v.abs() > 0.0).count() as f64 / x.len() as f64
}

/// Pixels of a disc centered at `(cy, cx)` (fractional row/col units).
fn disc_pixels(width: usize, height: usize, cy: f64, cx: f64, radius: f64) -> impl Iterator<Item = usize> {
    let r0 = (cy - radius - 1.0).floor().max(0.0) as usize;
    let r1 = ((cy + radius + 1.0).ceil().max(0.0) as usize).min(height);
    let c0 = (cx - radius - 1.0).floor().max(0.0) as usize;
    let c1 = ((cx + radius + 1.0).ceil().max(0.0) as usize).min(width);
    let r2 = radius * radius;
    (r0..r1).flat_map(move |r| {
        (c0..c1).filter_map(move |c| {
            let dy = r as f64 + 0.5 - cy;
            let dx = c as f64 + 0.5 - cx;
            (dy * dy + dx * dx <= r2).then_some(r * width + c)
        })
    })
}

pub fn generate_pixel_sparse(spec: &PhantomSpec) -> Result<ImageGrid> {
    if spec.kind != PhantomKind::PixelSparse {
        return Err(Error::param("spec is not a pixel-sparse phantom"));
    }
    let k = spec.k_target;
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::param(format!("k_target must lie in (0, 1], got {k}")));
    }
    let (w, h) = (spec.width, spec.height);
    let mut img = ImageGrid::zeros(w, h)?;
    let n = w * h;
    let target = (k * n as f64).round() as usize;
    if (target as f64 / n as f64 - k).abs() > PIXEL_SPARSITY_TOLERANCE || target == 0 {
        return Err(Error::Generation(format!(
            "a {w}x{h} grid cannot realize k = {k} within ±{PIXEL_SPARSITY_TOLERANCE}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_radius = (w.min(h) as f64 / 8.0).max(1.0);
    let mut filled = 0usize;
    let values = img.values_mut();
    // Every disc is centered on an empty pixel, so each pass adds at least
    // one pixel and the loop runs at most `target` times.
    while filled < target {
        let empty: Vec<usize> = (0..n).filter(|&i| values[i] == 0.0).collect();
        let center = empty[rng.random_range(0..empty.len())];
        let (cy, cx) = ((center / w) as f64 + 0.5, (center % w) as f64 + 0.5);
        let intensity = rng.random_range(0.2..=1.0);
        let mut radius = rng.random_range(1.0..=max_radius);
        let fresh = loop {
            let fresh: Vec<usize> = disc_pixels(w, h, cy, cx, radius)
                .filter(|&i| values[i] == 0.0)
                .collect();
            if filled + fresh.len() <= target {
                break fresh;
            }
            radius *= 0.7;
            if radius < 0.5 {
                break vec![center];
            }
        };
        for &i in &fresh {
            values[i] = intensity;
        }
        filled += fresh.len();
    }
    Ok(img)
}

/// A Pt/C-like phantom together with the masks used to build it.
#[derive(Debug, Clone)]
pub struct PtcPhantom {
    pub image: ImageGrid,
    /// Carbon support before pores were cut.
    pub support: Vec<bool>,
    pub pores: Vec<bool>,
    pub particles: Vec<bool>,
}

pub fn generate_ptc_like(spec: &PhantomSpec) -> Result<ImageGrid> {
    generate_ptc_like_with_masks(spec).map(|p| p.image)
}

pub fn generate_ptc_like_with_masks(spec: &PhantomSpec) -> Result<PtcPhantom> {
    if spec.kind != PhantomKind::PtcLike {
        return Err(Error::param("spec is not a Pt/C-like phantom"));
    }
    let (w, h) = (spec.width, spec.height);
    if w < PTC_MIN_SIZE || h < PTC_MIN_SIZE {
        return Err(Error::param(format!(
            "Pt/C-like phantoms need at least {PTC_MIN_SIZE}x{PTC_MIN_SIZE} pixels, got {w}x{h}"
        )));
    }
    let (carbon, platinum) = (spec.carbon_level, spec.particle_level);
    if !(carbon > 0.0 && platinum > 0.0 && carbon.is_finite() && platinum.is_finite()) || carbon == platinum {
        return Err(Error::param("carbon and particle levels must be distinct and positive"));
    }
    let g = spec.gradient_sparsity_target;
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::param(format!("gradient sparsity target must lie in (0, 1), got {g}")));
    }

    let n = w * h;
    let size = w.min(h) as f64;
    let target = g * n as f64;
    let tol = GRADIENT_SPARSITY_TOLERANCE * n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Support: a lobed blob whose outline uses roughly 40% of the edge budget.
    // A digitized outline of length L has about (4/π)·L non-zero gradient pixels.
    let base_radius = (0.4 * target / (2.0 * std::f64::consts::PI * 4.0 / std::f64::consts::PI))
        .clamp(3.0, 0.4 * size);
    let cy = h as f64 / 2.0 + rng.random_range(-0.04..0.04) * size;
    let cx = w as f64 / 2.0 + rng.random_range(-0.04..0.04) * size;
    let lobes: Vec<(f64, f64)> = (2..=5)
        .map(|_| (rng.random_range(0.0..0.08), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let mut support = vec![false; n];
    for r in 0..h {
        for c in 0..w {
            let dy = r as f64 + 0.5 - cy;
            let dx = c as f64 + 0.5 - cx;
            let theta = dy.atan2(dx);
            let scale: f64 = 1.0
                + lobes
                    .iter()
                    .enumerate()
                    .map(|(k, (a, ph))| a * ((k as f64 + 2.0) * theta + ph).cos())
                    .sum::<f64>();
            support[r * w + c] = (dy * dy + dx * dx).sqrt() <= base_radius * scale;
        }
    }

    // Particles: small discs entirely inside the support, not touching each other.
    let n_particles = rng.random_range(10..=30);
    let r_lo = (size / 128.0).max(1.0);
    let r_hi = (size / 48.0).max(1.5);
    let mut particles = vec![false; n];
    let mut keep_out = vec![false; n];
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_particles && attempts < MAX_PLACEMENT_ATTEMPTS {
        attempts += 1;
        let radius = rng.random_range(r_lo..=r_hi);
        let py = rng.random_range(0.0..h as f64);
        let px = rng.random_range(0.0..w as f64);
        let margin: Vec<usize> = disc_pixels(w, h, py, px, radius + 1.5).collect();
        let reach = radius + 1.5;
        let inside = py - reach >= 0.0 && py + reach <= h as f64 && px - reach >= 0.0 && px + reach <= w as f64;
        let fits = inside && margin.iter().all(|&i| support[i] && !keep_out[i]);
        if !fits {
            continue;
        }
        for i in disc_pixels(w, h, py, px, radius) {
            particles[i] = true;
        }
        for &i in &margin {
            keep_out[i] = true;
        }
        placed += 1;
    }
    if placed < 10 {
        return Err(Error::Generation(format!(
            "only {placed} particles fit on the support of a {w}x{h} phantom"
        )));
    }

    let render = |pores: &[bool]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if particles[i] {
                    platinum
                } else if support[i] && !pores[i] {
                    carbon
                } else {
                    0.0
                }
            })
            .collect()
    };
    let edge_count = |v: &[f64]| -> f64 {
        let mut count = 0usize;
        for r in 0..h {
            for c in 0..w {
                let (dx, dy) = crate::metrics::forward_diff(v, w, h, r, c);
                if dx != 0.0 || dy != 0.0 {
                    count += 1;
                }
            }
        }
        count as f64
    };

    // Pores: cut discs out of the carbon until the edge budget is used.
    let mut pores = vec![false; n];
    let mut values = render(&pores);
    let mut edges = edge_count(&values);
    if edges > target + tol {
        return Err(Error::Generation(format!(
            "support and particles already give gradient sparsity {:.4} above target {g}",
            edges / n as f64
        )));
    }
    let p_lo = (size / 64.0).max(1.0);
    let p_hi = (size / 20.0).max(2.0);
    let support_idx: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
    let mut attempts = 0;
    while edges < target - 0.3 * tol && attempts < MAX_PORE_ATTEMPTS {
        attempts += 1;
        let center = support_idx[rng.random_range(0..support_idx.len())];
        let (py, px) = ((center / w) as f64 + 0.5, (center % w) as f64 + 0.5);
        let radius = rng.random_range(p_lo..=p_hi);
        let cut: Vec<usize> = disc_pixels(w, h, py, px, radius).collect();
        if cut.iter().any(|&i| keep_out[i]) {
            continue;
        }
        let mut trial = pores.clone();
        for &i in &cut {
            trial[i] = support[i];
        }
        let trial_values = render(&trial);
        let trial_edges = edge_count(&trial_values);
        if trial_edges <= target + 0.3 * tol {
            pores = trial;
            values = trial_values;
            edges = trial_edges;
        }
    }
    if (edges - target).abs() > tol {
        return Err(Error::Generation(format!(
            "gradient sparsity {:.4} could not reach target {g}",
            edges / n as f64
        )));
    }
    Ok(PtcPhantom {
        image: ImageGrid::from_values(w, h, values)?,
        support,
        pores,
        particles,
    })
}
