//! Exact-intersection parallel-beam system matrix.
//!
//! Each row of `A` lists the pixels crossed by one ray together with the
//! length of the ray inside that pixel, found by marching the ray through
//! the grid lines (Siddon's method). The detector axis at angle `φ` is
//! `u = (cos φ, sin φ)` and rays travel along `v = (−sin φ, cos φ)`, so at
//! `φ = 0` rays are vertical and bin offsets coincide with column centers
//! when `n_det = width`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{detector_offset, ImageGrid, ProjectionGeometry};

/// Segments shorter than this are treated as corner grazes and dropped.
const TIE_LENGTH: f64 = 1e-12;
/// Below this many non-zeros a product runs on the calling thread.
const PAR_MIN_NNZ: usize = 1 << 18;

/// Sparse measurement matrix in compressed row form, with a transposed copy
/// so back projection can gather per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    width: usize,
    height: usize,
    n_proj: usize,
    n_det: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    col_ptr: Vec<usize>,
    t_rows: Vec<u32>,
    t_vals: Vec<f64>,
    row_norms_sq: Vec<f64>,
}

/// Projection data `b`, one row of `n_det` values per projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    n_proj: usize,
    n_det: usize,
    values: Vec<f64>,
    dose: Option<f64>,
    noisy: bool,
}

impl Sinogram {
    pub fn new(n_proj: usize, n_det: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_metadata(n_proj, n_det, values, None, false)
    }

    pub fn with_metadata(
        n_proj: usize,
        n_det: usize,
        values: Vec<f64>,
        dose: Option<f64>,
        noisy: bool,
    ) -> Result<Self> {
        if values.len() != n_proj * n_det {
            return Err(Error::dim("sinogram values", n_proj * n_det, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("sinogram value at index {i} is not finite")));
        }
        if let Some(d) = dose {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::param(format!("dose must be positive, got {d}")));
            }
        }
        if noisy && values.iter().any(|&v| v < 0.0) {
            return Err(Error::param("noisy Poisson data must be nonnegative"));
        }
        Ok(Self {
            n_proj,
            n_det,
            values,
            dose,
            noisy,
        })
    }

    pub fn zeros(n_proj: usize, n_det: usize) -> Self {
        Self {
            n_proj,
            n_det,
            values: vec![0.0; n_proj * n_det],
            dose: None,
            noisy: false,
        }
    }

    pub fn n_proj(&self) -> usize {
        self.n_proj
    }

    pub fn n_det(&self) -> usize {
        self.n_det
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

    pub fn dose(&self) -> Option<f64> {
        self.dose
    }

    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    /// Number of strictly non-zero measurements.
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn norm(&self) -> f64 {
        crate::metrics::norm2(&self.values)
    }
}

/// Intersection lengths of one ray with the grid, in traversal order.
///
/// The ray passes through `offset·u` with direction `v` for the angle given
/// in degrees. Rays that miss the grid return an empty list.
pub fn ray_intersections(width: usize, height: usize, offset: f64, angle_deg: f64) -> Vec<(u32, f64)> {
    let phi = angle_deg.to_radians();
    let (mut sin, mut cos) = phi.sin_cos();
    if cos.abs() < 1e-15 {
        cos = 0.0;
    }
    if sin.abs() < 1e-15 {
        sin = 0.0;
    }
    let (px, py) = (offset * cos, offset * sin);
    let (vx, vy) = (-sin, cos);

    let x_min = -(width as f64) / 2.0;
    let x_max = width as f64 / 2.0;
    let y_min = -(height as f64) / 2.0;
    let y_max = height as f64 / 2.0;

    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (p, v, lo, hi) in [(px, vx, x_min, x_max), (py, vy, y_min, y_max)] {
        if v == 0.0 {
            if p < lo || p > hi {
                return Vec::new();
            }
        } else {
            let a = (lo - p) / v;
            let b = (hi - p) / v;
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
    }
    if !(t_hi - t_lo > TIE_LENGTH) {
        return Vec::new();
    }

    let mut ts = Vec::with_capacity(width + height + 2);
    ts.push(t_lo);
    ts.push(t_hi);
    if vx != 0.0 {
        for i in 1..width {
            let t = (x_min + i as f64 - px) / vx;
            if t > t_lo && t < t_hi {
                ts.push(t);
            }
        }
    }
    if vy != 0.0 {
        for j in 1..height {
            let t = (y_min + j as f64 - py) / vy;
            if t > t_lo && t < t_hi {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);

    let mut out: Vec<(u32, f64)> = Vec::with_capacity(ts.len());
    for w in ts.windows(2) {
        let len = w[1] - w[0];
        if len <= TIE_LENGTH {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let col = (px + tm * vx - x_min).floor();
        let row = (y_max - (py + tm * vy)).floor();
        if col < 0.0 || row < 0.0 || col >= width as f64 || row >= height as f64 {
            continue;
        }
        let idx = (row as usize * width + col as usize) as u32;
        match out.last_mut() {
            Some(last) if last.0 == idx => last.1 += len,
            _ => out.push((idx, len)),
        }
    }
    out
}

/// Builds `A` for the given geometry.
pub fn build_system_matrix(geometry: &ProjectionGeometry) -> SystemMatrix {
    SystemMatrix::for_angles(
        geometry.width,
        geometry.height,
        geometry.n_det,
        geometry.schedule.angles(),
    )
}

impl SystemMatrix {
    /// Builds `A` for an arbitrary angle list (degrees), one row per
    /// (angle, bin) pair in angle-major order.
    pub fn for_angles(width: usize, height: usize, n_det: usize, angles: &[f64]) -> Self {
        let rows: Vec<Vec<(u32, f64)>> = angles
            .iter()
            .flat_map(|&a| (0..n_det).map(move |d| (a, d)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(a, d)| ray_intersections(width, height, detector_offset(n_det, d), a))
            .collect();
        Self::from_rows(width, height, angles.len(), n_det, rows)
    }

    fn from_rows(width: usize, height: usize, n_proj: usize, n_det: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n_cols = width * height;
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        let mut row_norms_sq = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        let mut col_counts = vec![0usize; n_cols];
        for row in &rows {
            let mut nsq = 0.0;
            for &(c, v) in row {
                cols.push(c);
                vals.push(v);
                col_counts[c as usize] += 1;
                nsq += v * v;
            }
            row_ptr.push(cols.len());
            row_norms_sq.push(nsq);
        }

        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        col_ptr.push(0);
        for c in &col_counts {
            col_ptr.push(col_ptr.last().unwrap() + c);
        }
        let mut fill = col_ptr[..n_cols].to_vec();
        let mut t_rows = vec![0u32; nnz];
        let mut t_vals = vec![0.0; nnz];
        for (i, row) in rows.iter().enumerate() {
            for &(c, v) in row {
                let slot = &mut fill[c as usize];
                t_rows[*slot] = i as u32;
                t_vals[*slot] = v;
                *slot += 1;
            }
        }

        Self {
            width,
            height,
            n_proj,
            n_det,
            row_ptr,
            cols,
            vals,
            col_ptr,
            t_rows,
            t_vals,
            row_norms_sq,
        }
    }

    /// `cA`, for checking scale behaviour of solvers.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= c);
        out.t_vals.iter_mut().for_each(|v| *v *= c);
        out.row_norms_sq.iter_mut().for_each(|v| *v *= c * c);
        out
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.width * self.height
    }

    pub fn n_proj(&self) -> usize {
        self.n_proj
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Pixel indices and lengths of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// `‖a_i‖²` for row `i`.
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    /// `out = A x` on raw slices.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols());
        assert_eq!(out.len(), self.n_rows());
        let row = |(i, o): (usize, &mut f64)| {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
        };
        if self.nnz() < PAR_MIN_NNZ {
            out.iter_mut().enumerate().for_each(row);
        } else {
            out.par_iter_mut().with_min_len(256).enumerate().for_each(row);
        }
    }

    /// `out = Aᵀ y` on raw slices; gathers per pixel so the result does not
    /// depend on thread scheduling.
    pub fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.n_rows());
        assert_eq!(out.len(), self.n_cols());
        let col = |(j, o): (usize, &mut f64)| {
            let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
            *o = self.t_rows[a..b]
                .iter()
                .zip(&self.t_vals[a..b])
                .map(|(&r, &v)| v * y[r as usize])
                .sum();
        };
        if self.nnz() < PAR_MIN_NNZ {
            out.iter_mut().enumerate().for_each(col);
        } else {
            out.par_iter_mut().with_min_len(256).enumerate().for_each(col);
        }
    }

    /// Dot product of row `i` with `x`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum()
    }

    /// Dense row-major copy, for small-scale checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|i| {
                let mut r = vec![0.0; self.n_cols()];
                let (cols, vals) = self.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    r[c as usize] = v;
                }
                r
            })
            .collect()
    }

    /// Writes `row col length` triplets, one per line.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.n_rows() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{i} {c} {v}")?;
            }
        }
        Ok(())
    }
}

pub fn forward_project(a: &SystemMatrix, x: &ImageGrid) -> Result<Sinogram> {
    if x.len() != a.n_cols() {
        return Err(Error::dim("image pixels", a.n_cols(), x.len()));
    }
    let mut out = vec![0.0; a.n_rows()];
    a.apply(x.values(), &mut out);
    Ok(Sinogram {
        n_proj: a.n_proj,
        n_det: a.n_det,
        values: out,
        dose: None,
        noisy: false,
    })
}

pub fn back_project(a: &SystemMatrix, b: &Sinogram) -> Result<ImageGrid> {
    if b.len() != a.n_rows() {
        return Err(Error::dim("sinogram values", a.n_rows(), b.len()));
    }
    let mut out = vec![0.0; a.n_cols()];
    a.apply_adjoint(b.values(), &mut out);
    ImageGrid::from_values(a.width, a.height, out)
}

/// Power-iteration estimate of the largest singular value `‖A‖₂`.
///
/// Returns `‖A v_k‖` for the normalized `k`-th power iterate of `AᵀA`, which
/// never decreases with `k`. The start vector comes from `seed`.
pub fn estimate_operator_norm(a: &SystemMatrix, iterations: usize, seed: u64) -> f64 {
    let n = a.n_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut av = vec![0.0; a.n_rows()];
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..iterations.max(1) {
        a.apply(&v, &mut av);
        a.apply_adjoint(&av, &mut w);
        let nw = crate::metrics::norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        a.apply(&v, &mut av);
        estimate = crate::metrics::norm2(&av);
    }
    estimate
}
