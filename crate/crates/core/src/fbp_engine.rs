//! The discrete filtered back-projection operator
//!
//! f_rec(x) = −Δα/(4πε) Σ_{k,j} Hφ′((α_k·x − p_j)/ε) g_{k,j}
//!
//! applied to noise sinograms on a local patch, to whole images and to the
//! exact Radon data of a disk.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_lab::FilteredKernelTable;
use crate::noise_model::{CounterRng, NoiseDistribution, NoiseDraw};
use crate::scan_geometry::{dot, unit, GridSpec, LocalPatch, Point};

/// Default half-width of the optional detector window, in units of ε.
pub const DEFAULT_WINDOW: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Patch offsets χ̌ for local results, physical points for images.
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub grid: GridSpec,
    pub kernel: String,
    pub seed: Option<u64>,
    /// `(rows, columns)` when the points form an image.
    pub shape: Option<(usize, usize)>,
}

impl ReconstructionResult {
    /// Local results as `offset_x,offset_y,value`; images as one CSV row per
    /// pixel row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        match self.shape {
            Some((rows, cols)) => {
                for r in 0..rows {
                    w.write_record(self.values[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()))?;
                }
            }
            None => {
                w.write_record(["offset_x", "offset_y", "value"])?;
                for (p, v) in self.points.iter().zip(&self.values) {
                    w.write_record([p[0].to_string(), p[1].to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// −Δα/(4πε)
pub fn prefactor(grid: &GridSpec) -> f64 {
    -grid.delta_alpha / (4.0 * PI * grid.epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RowSpan {
    /// First local detector index of the span.
    start: usize,
    len: usize,
    /// Offset of this row's block in the weight buffer.
    offset: usize,
}

/// The patch reconstruction as a sparse linear map from the sinogram to the
/// K patch values. Each angle contributes one contiguous detector span shared
/// by all points, and weights are stored point-major within the span.
#[derive(Debug, Clone)]
pub struct PatchOperator {
    points: usize,
    detector_count: usize,
    prefactor: f64,
    rows: Vec<RowSpan>,
    weights: Vec<f64>,
}

impl PatchOperator {
    /// `window` keeps only |a_k − j + α_k·χ̌| ≤ T; `None` keeps every detector.
    pub fn build(grid: &GridSpec, patch: &LocalPatch, fk: &FilteredKernelTable, window: Option<f64>) -> Result<Self> {
        check_epsilon(grid, patch)?;
        let nd = grid.detector_count;
        let j0 = grid.detector_index(0);
        let mut rows = Vec::with_capacity(grid.angle_count);
        let mut weights = Vec::new();
        let mut centres = vec![0.0; patch.len()];
        for k in 0..grid.angle_count {
            let theta = unit(grid.alpha(k));
            let a = grid.a_k(patch.x0, k);
            for (c, chi) in centres.iter_mut().zip(&patch.offsets) {
                *c = a + dot(theta, *chi);
            }
            let (start, end) = match window {
                None => (0, nd),
                Some(t) => {
                    let lo = centres.iter().copied().fold(f64::INFINITY, f64::min) - t;
                    let hi = centres.iter().copied().fold(f64::NEG_INFINITY, f64::max) + t;
                    let s = ((lo.ceil() as i64) - j0).clamp(0, nd as i64) as usize;
                    let e = ((hi.floor() as i64) - j0 + 1).clamp(0, nd as i64) as usize;
                    (s, e.max(s))
                }
            };
            let offset = weights.len();
            for &c in &centres {
                for i in start..end {
                    let arg = c - (j0 + i as i64) as f64;
                    let inside = window.is_none_or(|t| arg.abs() <= t);
                    weights.push(if inside { fk.value(arg) } else { 0.0 });
                }
            }
            rows.push(RowSpan { start, len: end - start, offset });
        }
        Ok(PatchOperator {
            points: patch.len(),
            detector_count: nd,
            prefactor: prefactor(grid),
            rows,
            weights,
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of sinogram entries the operator reads.
    pub fn support_len(&self) -> usize {
        self.rows.iter().map(|r| r.len).sum()
    }

    /// Σ over the support of w_i w_l σ_e² for a per-entry variance, i.e. the
    /// exact covariance of the patch values (prefactor included).
    pub fn covariance(&self, entry_variance: impl Fn(usize) -> f64) -> Vec<f64> {
        let kk = self.points;
        let mut cov = vec![0.0; kk * kk];
        for (k, r) in self.rows.iter().enumerate() {
            for s in 0..r.len {
                let v = entry_variance(k * self.detector_count + r.start + s);
                for a in 0..kk {
                    let wa = self.weights[r.offset + a * r.len + s];
                    for b in 0..kk {
                        cov[a * kk + b] += wa * self.weights[r.offset + b * r.len + s] * v;
                    }
                }
            }
        }
        let p2 = self.prefactor * self.prefactor;
        cov.iter_mut().for_each(|c| *c *= p2);
        cov
    }

    /// Applies the operator to a full row-major sinogram.
    pub fn apply(&self, sinogram: &[f64], out: &mut [f64]) {
        self.accumulate(out, |e| sinogram[e]);
    }

    /// Applies the operator to the sinogram whose entry `e` is
    /// `unit_sample(e) · scales[e]`, generating only the entries it reads.
    /// Bit-identical to `apply` on the corresponding [`NoiseDraw`].
    pub fn apply_generated(&self, rng: &CounterRng, dist: NoiseDistribution, scales: &[f64], out: &mut [f64]) {
        self.accumulate(out, |e| dist.unit_sample(rng, e as u64) * scales[e]);
    }

    #[inline]
    fn accumulate(&self, out: &mut [f64], mut entry: impl FnMut(usize) -> f64) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut eta = Vec::new();
        for (k, r) in self.rows.iter().enumerate() {
            let base = k * self.detector_count + r.start;
            eta.clear();
            eta.extend((0..r.len).map(|s| entry(base + s)));
            for (a, o) in out.iter_mut().enumerate() {
                let w = &self.weights[r.offset + a * r.len..r.offset + (a + 1) * r.len];
                *o += w.iter().zip(&eta).map(|(w, e)| w * e).sum::<f64>();
            }
        }
        out.iter_mut().for_each(|v| *v *= self.prefactor);
    }
}

fn check_epsilon(grid: &GridSpec, patch: &LocalPatch) -> Result<()> {
    if (patch.epsilon - grid.epsilon).abs() > 1e-12 * grid.epsilon {
        return Err(Error::EpsilonMismatch { patch: patch.epsilon, grid: grid.epsilon });
    }
    Ok(())
}

fn check_dims(values: &[f64], grid: &GridSpec) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), actual: values.len() });
    }
    Ok(())
}

/// N_ε^rec(x₀ + εχ̌) for every patch offset.
pub fn reconstruct_local(
    noise: &NoiseDraw,
    patch: &LocalPatch,
    grid: &GridSpec,
    fk: &FilteredKernelTable,
    window: Option<f64>,
) -> Result<ReconstructionResult> {
    check_epsilon(grid, patch)?;
    check_dims(&noise.values, grid)?;
    let op = PatchOperator::build(grid, patch, fk, window)?;
    let mut values = vec![0.0; patch.len()];
    op.apply(&noise.values, &mut values);
    Ok(ReconstructionResult {
        points: patch.offsets.clone(),
        values,
        grid: grid.clone(),
        kernel: fk.kernel_name.clone(),
        seed: Some(noise.seed),
        shape: None,
    })
}

/// Value of the reconstruction at a single physical point.
pub fn reconstruct_point(values: &[f64], x: Point, grid: &GridSpec, fk: &FilteredKernelTable, window: Option<f64>) -> f64 {
    let nd = grid.detector_count;
    let j0 = grid.detector_index(0);
    let mut total = 0.0;
    for k in 0..grid.angle_count {
        let c = (dot(unit(grid.alpha(k)), x) - grid.p_bar) / grid.epsilon;
        let (start, end) = match window {
            None => (0, nd),
            Some(t) => (
                (((c - t).ceil() as i64) - j0).clamp(0, nd as i64) as usize,
                (((c + t).floor() as i64) - j0 + 1).clamp(0, nd as i64) as usize,
            ),
        };
        let row = &values[k * nd..(k + 1) * nd];
        for i in start..end.max(start) {
            total += fk.value(c - (j0 + i as i64) as f64) * row[i];
        }
    }
    prefactor(grid) * total
}

/// Axis-aligned rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn square(centre: Point, half_width: f64) -> Self {
        Region {
            x_min: centre[0] - half_width,
            x_max: centre[0] + half_width,
            y_min: centre[1] - half_width,
            y_max: centre[1] + half_width,
        }
    }

    /// Pixel centres, row-major from the top-left corner (x_min, y_max).
    pub fn pixel_centres(&self, resolution: usize) -> Vec<Point> {
        let dx = (self.x_max - self.x_min) / resolution as f64;
        let dy = (self.y_max - self.y_min) / resolution as f64;
        let mut pts = Vec::with_capacity(resolution * resolution);
        for r in 0..resolution {
            for c in 0..resolution {
                pts.push([self.x_min + (c as f64 + 0.5) * dx, self.y_max - (r as f64 + 0.5) * dy]);
            }
        }
        pts
    }
}

/// Reconstruction on a `resolution × resolution` pixel grid over `region`.
pub fn reconstruct_image(
    sinogram: &[f64],
    region: Region,
    resolution: usize,
    grid: &GridSpec,
    fk: &FilteredKernelTable,
    window: Option<f64>,
) -> Result<ReconstructionResult> {
    check_dims(sinogram, grid)?;
    if resolution == 0 {
        return Err(Error::InvalidParameter("image resolution must be positive".into()));
    }
    let corner = region.x_min.abs().max(region.x_max.abs()).hypot(region.y_min.abs().max(region.y_max.abs()));
    if corner > grid.radius + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "region reaches radius {corner}, beyond the detector coverage {}",
            grid.radius
        )));
    }
    let points = region.pixel_centres(resolution);
    let values = points
        .par_iter()
        .map(|&x| reconstruct_point(sinogram, x, grid, fk, window))
        .collect();
    Ok(ReconstructionResult {
        points,
        values,
        grid: grid.clone(),
        kernel: fk.kernel_name.clone(),
        seed: None,
        shape: Some((resolution, resolution)),
    })
}

/// Exact Radon data of a unit-density disk: chord lengths 2√(r² − d²).
pub fn radon_disk(center: Point, radius: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    if center[0].hypot(center[1]) + radius > grid.radius + 1e-12 {
        return Err(Error::InvalidParameter("disk must lie inside the detector coverage".into()));
    }
    let mut out = Vec::with_capacity(grid.len());
    for k in 0..grid.angle_count {
        let s = dot(unit(grid.alpha(k)), center);
        for j in 0..grid.detector_count {
            let d = grid.p(j) - s;
            out.push(if d.abs() < radius { 2.0 * (radius * radius - d * d).sqrt() } else { 0.0 });
        }
    }
    Ok(out)
}

/// Mean absolute second difference along rows and columns divided by the
/// value range; small numbers mean a visually smooth image.
pub fn roughness(result: &ReconstructionResult) -> f64 {
    let (rows, cols) = result.shape.unwrap_or((1, result.values.len()));
    let v = &result.values;
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..rows {
        for c in 0..cols {
            let at = |r: usize, c: usize| v[r * cols + c];
            if c + 2 < cols {
                sum += (at(r, c) - 2.0 * at(r, c + 1) + at(r, c + 2)).abs();
                count += 1;
            }
            if r + 2 < rows {
                sum += (at(r, c) - 2.0 * at(r + 1, c) + at(r + 2, c)).abs();
                count += 1;
            }
        }
    }
    if count == 0 || hi <= lo {
        return 0.0;
    }
    sum / count as f64 / (hi - lo)
}

/// Writes a JSON document next to CSV outputs.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(value)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
