//! Monte Carlo ensembles of local noise reconstructions, their sample
//! statistics, and the comparison against the predicted Gaussian limit.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp_engine::{PatchOperator, DEFAULT_WINDOW};
use crate::fitting::spearman;
use crate::kernel_lab::{Autocorrelation, FilteredKernelTable};
use crate::lra_theory::{predicted_cov_matrix, PredictedCovariance, DEFAULT_NODES};
use crate::noise_model::{noise_scales, CounterRng, NoiseDistribution, VarianceField};
use crate::scan_geometry::{build_grid, AngleConvention, GridSpec, LocalPatch, Point};

/// Bins per axis of the 2D histogram.
pub const DEFAULT_BINS: usize = 16;
/// Histogram half-width in units of √C(0).
pub const DEFAULT_EXTENT_SIGMAS: f64 = 4.0;
/// Samples reconstructed per rayon task.
const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    /// Both axes cover [−half_width, half_width].
    pub half_width: f64,
}

impl HistogramSpec {
    pub fn bin_width(&self) -> f64 {
        2.0 * self.half_width / self.bins as f64
    }

    pub fn centre(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.bin_width()
    }

    /// Bin of `v`; values outside the range land in the edge bins.
    fn index(&self, v: f64) -> usize {
        let u = ((v + self.half_width) / self.bin_width()).floor();
        u.clamp(0.0, (self.bins - 1) as f64) as usize
    }
}

/// Counts on a square grid, indexed iy·bins + ix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    /// Samples that fell outside the range and were clamped into edge bins.
    pub clamped: u64,
}

impl Histogram2D {
    pub fn build(xs: &[f64], ys: &[f64], spec: HistogramSpec) -> Result<Self> {
        if spec.bins == 0 || !(spec.half_width > 0.0) {
            return Err(Error::InvalidParameter("histogram needs bins > 0 and a positive range".into()));
        }
        let mut counts = vec![0u64; spec.bins * spec.bins];
        let mut clamped = 0;
        for (&x, &y) in xs.iter().zip(ys) {
            if x.abs() > spec.half_width || y.abs() > spec.half_width {
                clamped += 1;
            }
            counts[spec.index(y) * spec.bins + spec.index(x)] += 1;
        }
        Ok(Histogram2D { spec, counts, clamped })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by n times the bin area.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total() as f64 * self.spec.bin_width().powi(2);
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x_centre", "y_centre", "count", "density"])?;
        let dens = self.density();
        for iy in 0..self.spec.bins {
            for ix in 0..self.spec.bins {
                let i = iy * self.spec.bins + ix;
                w.write_record([
                    self.spec.centre(ix).to_string(),
                    self.spec.centre(iy).to_string(),
                    self.counts[i].to_string(),
                    dens[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_samples: usize,
    pub sample_mean: Vec<f64>,
    /// Row-major K×K, normalized by n − 1.
    pub sample_cov: Vec<Vec<f64>>,
    /// Present for two-point ensembles.
    pub histogram_2d: Option<Histogram2D>,
    pub fingerprint: String,
    /// Row-major n×K sample values.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl EnsembleStats {
    /// Two-pass mean and covariance over row-major n×K samples.
    pub fn from_samples(samples: Vec<f64>, k: usize, fingerprint: String) -> Result<Self> {
        if k == 0 || !samples.len().is_multiple_of(k) {
            return Err(Error::DimensionMismatch { expected: k, actual: samples.len() });
        }
        let n = samples.len() / k;
        if n < 2 {
            return Err(Error::InvalidParameter("an ensemble needs at least two samples".into()));
        }
        let mut mean = vec![0.0; k];
        for row in samples.chunks_exact(k) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![vec![0.0; k]; k];
        for row in samples.chunks_exact(k) {
            for a in 0..k {
                let da = row[a] - mean[a];
                for b in a..k {
                    cov[a][b] += da * (row[b] - mean[b]);
                }
            }
        }
        for a in 0..k {
            for b in a..k {
                cov[a][b] /= (n - 1) as f64;
                cov[b][a] = cov[a][b];
            }
        }
        Ok(EnsembleStats {
            n_samples: n,
            sample_mean: mean,
            sample_cov: cov,
            histogram_2d: None,
            fingerprint,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.sample_mean.len()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.samples.iter().skip(i).step_by(self.dim()).copied().collect()
    }

    /// Statistics of the two components (i, j), with their 2D histogram.
    pub fn pair(&self, i: usize, j: usize, spec: HistogramSpec) -> Result<EnsembleStats> {
        let k = self.dim();
        if i >= k || j >= k {
            return Err(Error::DimensionMismatch { expected: k, actual: i.max(j) + 1 });
        }
        let xs = self.column(i);
        let ys = self.column(j);
        let samples = xs.iter().zip(&ys).flat_map(|(x, y)| [*x, *y]).collect();
        let mut out = EnsembleStats::from_samples(samples, 2, format!("{}[{i},{j}]", self.fingerprint))?;
        out.histogram_2d = Some(Histogram2D::build(&xs, &ys, spec)?);
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Detector window for the reconstruction, `None` for the full detector.
    pub window: Option<f64>,
    pub bins: usize,
    /// Histogram half-width; defaults to 4·max_i √(sample variance).
    pub half_width: Option<f64>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { window: Some(DEFAULT_WINDOW), bins: DEFAULT_BINS, half_width: None }
    }
}

/// Reconstructs `n` independent noise realizations on the patch. Sample `s`
/// uses the noise stream seeded by `sample_seed(master_seed, s)`, so it equals
/// `reconstruct_local(draw_noise(.., sample_seed(master_seed, s)), ..)` bit
/// for bit; results are independent of the thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    n: usize,
    grid: &GridSpec,
    patch: &LocalPatch,
    field: &VarianceField,
    dist: NoiseDistribution,
    fk: &FilteredKernelTable,
    master_seed: u64,
    options: &EnsembleOptions,
) -> Result<EnsembleStats> {
    if n < 2 {
        return Err(Error::InvalidParameter("an ensemble needs at least two samples".into()));
    }
    let op = PatchOperator::build(grid, patch, fk, options.window)?;
    let scales = noise_scales(grid, field, dist)?;
    let k = patch.len();
    let mut samples = vec![0.0; n * k];
    samples.par_chunks_mut(BLOCK * k).enumerate().for_each(|(b, chunk)| {
        for (r, out) in chunk.chunks_exact_mut(k).enumerate() {
            let s = (b * BLOCK + r) as u64;
            op.apply_generated(&CounterRng::for_sample(master_seed, s), dist, &scales, out);
        }
    });
    let fingerprint = format!(
        "eps={:e};kappa={:e};x0={:?};offsets={:?};dist={:?};seed={master_seed};n={n};window={:?}",
        grid.epsilon, grid.kappa, patch.x0, patch.offsets, dist, options.window
    );
    let mut stats = EnsembleStats::from_samples(samples, k, fingerprint)?;
    if k == 2 {
        let hw = options.half_width.unwrap_or_else(|| {
            DEFAULT_EXTENT_SIGMAS * stats.sample_cov[0][0].max(stats.sample_cov[1][1]).sqrt()
        });
        let xs = stats.column(0);
        let ys = stats.column(1);
        stats.histogram_2d = Some(Histogram2D::build(&xs, &ys, HistogramSpec { bins: options.bins, half_width: hw })?);
    }
    Ok(stats)
}

/// Zero-mean bivariate normal density with covariance `cov` at the bin
/// centres, in the histogram's layout.
pub fn gaussian_pdf_on_grid(cov: [[f64; 2]; 2], spec: HistogramSpec) -> Result<Vec<f64>> {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    if !(det > 0.0) || cov[0][0] <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let norm = 1.0 / (2.0 * PI * det.sqrt());
    let mut out = Vec::with_capacity(spec.bins * spec.bins);
    for iy in 0..spec.bins {
        let y = spec.centre(iy);
        for ix in 0..spec.bins {
            let x = spec.centre(ix);
            let q = x * (inv[0][0] * x + inv[0][1] * y) + y * (inv[1][0] * x + inv[1][1] * y);
            out.push(norm * (-0.5 * q).exp());
        }
    }
    Ok(out)
}

/// 2×2 block (i, j) of a predicted covariance.
pub fn pair_block(pred: &PredictedCovariance, i: usize, j: usize) -> [[f64; 2]; 2] {
    [[pred.matrix[i][i], pred.matrix[i][j]], [pred.matrix[j][i], pred.matrix[j][j]]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub cov_error: f64,
    pub pdf_error: f64,
    /// Allowed max_i |mean_i| in units of √(C(0)/n).
    pub mean_sigmas: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { cov_error: 0.07, pdf_error: 0.12, mean_sigmas: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// ‖C − C_o‖_F / ‖C_o‖_F
    pub cov_error_frobenius: f64,
    /// ‖P_o − P‖₂ / ‖P_o‖₂, two-point ensembles only.
    pub pdf_error_l2: Option<f64>,
    pub mean_norm: f64,
    pub mean_bound: f64,
    pub observed_cov: Vec<Vec<f64>>,
    pub predicted_cov: Vec<Vec<f64>>,
    pub thresholds: Thresholds,
    pub cov_pass: bool,
    pub pdf_pass: bool,
    pub mean_pass: bool,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.cov_pass && self.pdf_pass && self.mean_pass
    }
}

pub fn frobenius_relative(pred: &[Vec<f64>], observed: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (pr, or) in pred.iter().zip(observed) {
        for (p, o) in pr.iter().zip(or) {
            num += (p - o).powi(2);
            den += o * o;
        }
    }
    (num / den).sqrt()
}

pub fn compare(stats: &EnsembleStats, pred: &PredictedCovariance, thresholds: Thresholds) -> Result<ComparisonReport> {
    if stats.dim() != pred.dim() {
        return Err(Error::DimensionMismatch { expected: pred.dim(), actual: stats.dim() });
    }
    let cov_error = frobenius_relative(&pred.matrix, &stats.sample_cov);
    let pdf_error = match &stats.histogram_2d {
        Some(h) if stats.dim() == 2 => {
            let p = gaussian_pdf_on_grid(pair_block(pred, 0, 1), h.spec)?;
            let po = h.density();
            let num: f64 = po.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = po.iter().map(|a| a * a).sum();
            Some((num / den).sqrt())
        }
        _ => None,
    };
    let mean_norm = stats.sample_mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let max_mean = stats.sample_mean.iter().map(|m| m.abs()).fold(0.0, f64::max);
    let mean_bound = thresholds.mean_sigmas * (pred.c0 / stats.n_samples as f64).sqrt();
    Ok(ComparisonReport {
        cov_error_frobenius: cov_error,
        pdf_error_l2: pdf_error,
        mean_norm,
        mean_bound,
        observed_cov: stats.sample_cov.clone(),
        predicted_cov: pred.matrix.clone(),
        thresholds,
        cov_pass: cov_error <= thresholds.cov_error,
        pdf_pass: pdf_error.is_none_or(|e| e <= thresholds.pdf_error),
        mean_pass: max_mean <= mean_bound,
    })
}

/// Everything an ε-sweep needs besides ε itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBase {
    pub kappa: f64,
    pub radius: f64,
    pub convention: AngleConvention,
    pub x0: Point,
    pub offsets: Vec<Point>,
    pub field: VarianceField,
    pub dist: NoiseDistribution,
    pub master_seed: u64,
    pub options: EnsembleOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub n: usize,
    pub cov_error_frobenius: f64,
    pub pdf_error_l2: Option<f64>,
    pub mean_norm: f64,
}

/// Runs an ensemble and the comparison at every ε. The histogram range at
/// each ε is ±4√C(0) of the prediction.
pub fn epsilon_sweep(
    eps_list: &[f64],
    n: usize,
    base: &SweepBase,
    fk: &FilteredKernelTable,
    ac: &Autocorrelation,
) -> Result<Vec<SweepRow>> {
    eps_list
        .iter()
        .map(|&eps| {
            let grid = build_grid(eps, base.kappa, None, base.radius, base.convention)?;
            let patch = LocalPatch::new(base.x0, base.offsets.clone(), eps)?;
            let pred = predicted_cov_matrix(&patch, &base.field, ac, base.kappa, DEFAULT_NODES)?;
            let mut options = base.options;
            options.half_width = Some(DEFAULT_EXTENT_SIGMAS * pred.c0.sqrt());
            let stats = run_ensemble(n, &grid, &patch, &base.field, base.dist, fk, base.master_seed, &options)?;
            let rep = compare(&stats, &pred, Thresholds::default())?;
            Ok(SweepRow {
                epsilon: eps,
                n,
                cov_error_frobenius: rep.cov_error_frobenius,
                pdf_error_l2: rep.pdf_error_l2,
                mean_norm: rep.mean_norm,
            })
        })
        .collect()
}

/// Spearman correlation of (ε, covariance error) over a sweep.
pub fn sweep_trend(rows: &[SweepRow]) -> Result<f64> {
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.cov_error_frobenius).collect();
    spearman(&eps, &err)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epsilon", "n", "cov_error_frobenius", "pdf_error_l2", "mean_norm"])?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.n.to_string(),
            r.cov_error_frobenius.to_string(),
            r.pdf_error_l2.map_or(String::new(), |v| v.to_string()),
            r.mean_norm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// ε = 10^{−(1 + i/3)} for i = 0..=6: three points per decade from 0.1
/// down to 10⁻³.
pub fn default_sweep_epsilons() -> Vec<f64> {
    (0..7).map(|i| 1.0 / 10f64.powf(1.0 + i as f64 / 3.0).round()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_lab::{build_filtered_kernel, build_keys_kernel};

    #[test]
    fn identical_samples_have_zero_covariance() {
        let s = EnsembleStats::from_samples(vec![0.3, -1.2, 0.3, -1.2], 2, String::new()).unwrap();
        assert_eq!(s.sample_cov, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!(s.sample_mean, vec![0.3, -1.2]);
    }

    #[test]
    fn two_pass_covariance_is_symmetric() {
        let samples: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let s = EnsembleStats::from_samples(samples, 3, String::new()).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(s.sample_cov[a][b], s.sample_cov[b][a]);
            }
        }
    }

    #[test]
    fn standard_normal_density_at_centre() {
        let spec = HistogramSpec { bins: 41, half_width: 4.1 };
        let p = gaussian_pdf_on_grid([[1.0, 0.0], [0.0, 1.0]], spec).unwrap();
        assert!((p[20 * 41 + 20] - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let mass: f64 = p.iter().sum::<f64>() * spec.bin_width().powi(2);
        assert!(mass > 0.99);
        assert!(matches!(
            gaussian_pdf_on_grid([[1.0, 1.0], [1.0, 1.0]], spec),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn histogram_counts_every_sample() {
        let xs = [0.0, 10.0, -0.5, 0.2];
        let ys = [0.0, 0.1, -10.0, 0.3];
        let h = Histogram2D::build(&xs, &ys, HistogramSpec { bins: 4, half_width: 1.0 }).unwrap();
        assert_eq!(h.total(), 4);
        assert_eq!(h.clamped, 2);
        let mass: f64 = h.density().iter().sum::<f64>() * 0.25;
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compare_with_itself_is_exact() {
        let s = EnsembleStats::from_samples(vec![1.0, 0.5, -1.0, 0.1, 0.2, -0.7], 2, String::new()).unwrap();
        let pred = PredictedCovariance {
            offsets: vec![[0.0, 0.0], [1.0, 0.0]],
            matrix: s.sample_cov.clone(),
            c0: s.sample_cov[0][0],
            nodes: 0,
            error_estimate: 0.0,
            min_eigenvalue: 0.0,
            max_eigenvalue: 1.0,
        };
        assert_eq!(compare(&s, &pred, Thresholds::default()).unwrap().cov_error_frobenius, 0.0);
    }

    #[test]
    fn ensemble_is_deterministic_across_thread_counts() {
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        let grid = build_grid(0.01, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let x0 = [2f64.sqrt() / 4.0, 3f64.sqrt() / 4.0];
        let patch = LocalPatch::new(x0, vec![[0.0, 0.0], [0.35, 0.35]], 0.01).unwrap();
        let f = VarianceField::reference();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    run_ensemble(300, &grid, &patch, &f, NoiseDistribution::Uniform, &fk, 9, &EnsembleOptions::default())
                        .unwrap()
                })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.histogram_2d.as_ref().unwrap().total(), 300);
    }

    #[test]
    fn default_sweep_spans_two_decades() {
        let e = default_sweep_epsilons();
        assert_eq!(e.len(), 7);
        assert_eq!(e[0], 0.1);
        assert_eq!(e[6], 1e-3);
    }
}
