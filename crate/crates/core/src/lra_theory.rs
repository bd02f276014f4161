//! Analytic predictors for the local noise statistics: the limiting covariance
//! C(v), the lattice sums ψ and Ψ, the quantity d_ε and its limit, Lyapunov
//! ratios, and the exact versus x₀-frozen second moment of θ·N_ε^rec.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_lab::{Autocorrelation, FilteredKernelTable};
use crate::noise_model::{NoiseDistribution, VarianceField};
use crate::quadrature::{composite, periodic_trapezoid};
use crate::scan_geometry::{dot, unit, GridSpec, LocalPatch, Point};

pub const DEFAULT_NODES: usize = 4096;
pub const DEFAULT_TRUNCATION: usize = 200;

/// σ²(α, α·x₀), the variance seen along the trajectory of x₀.
pub fn trajectory_variance(field: &VarianceField, x0: Point, alpha: f64) -> f64 {
    field.sigma2(alpha, dot(unit(alpha), x0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceValue {
    pub value: f64,
    pub nodes: usize,
    /// |full − half-rule| from the node-halving check.
    pub error_estimate: f64,
}

/// C(v) = (κ/4π)² ∫₀^{2π} σ²(α, α·x₀) (φ′⋆φ′)(α·v) dα by the periodic
/// trapezoid rule.
pub fn predicted_cov(
    v: Point,
    x0: Point,
    field: &VarianceField,
    ac: &Autocorrelation,
    kappa: f64,
    nodes: usize,
) -> Result<CovarianceValue> {
    if nodes < 256 {
        return Err(Error::InvalidParameter(format!("need at least 256 quadrature nodes, got {nodes}")));
    }
    let nodes = nodes + nodes % 2;
    let est = periodic_trapezoid(2.0 * PI, nodes, |a| {
        trajectory_variance(field, x0, a) * ac.value(dot(unit(a), v))
    });
    let scale = (kappa / (4.0 * PI)).powi(2);
    Ok(CovarianceValue {
        value: scale * est.value,
        nodes,
        error_estimate: scale * est.error_estimate,
    })
}

pub fn predicted_cov_scalar(
    v: Point,
    x0: Point,
    field: &VarianceField,
    ac: &Autocorrelation,
    kappa: f64,
    nodes: usize,
) -> Result<f64> {
    Ok(predicted_cov(v, x0, field, ac, kappa, nodes)?.value)
}

/// (κ/4π)² ∫σ²(α, α·x₀)dα; multiplied by (φ′⋆φ′)(0) it equals C(0).
pub fn trajectory_integral(x0: Point, field: &VarianceField, nodes: usize) -> f64 {
    periodic_trapezoid(2.0 * PI, nodes, |a| trajectory_variance(field, x0, a)).value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedCovariance {
    pub offsets: Vec<Point>,
    /// Row-major K×K.
    pub matrix: Vec<Vec<f64>>,
    pub c0: f64,
    pub nodes: usize,
    pub error_estimate: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl PredictedCovariance {
    pub fn dim(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -1e-10 * self.max_eigenvalue.abs()
    }

    pub fn as_dmatrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| self.matrix[i][j])
    }
}

/// Entries C(χ̌_i − χ̌_j). The lower triangle is copied from the upper one so
/// the matrix is symmetric bit for bit.
pub fn predicted_cov_matrix(
    patch: &LocalPatch,
    field: &VarianceField,
    ac: &Autocorrelation,
    kappa: f64,
    nodes: usize,
) -> Result<PredictedCovariance> {
    let k = patch.len();
    let mut m = vec![vec![0.0; k]; k];
    let mut err = 0.0_f64;
    let diag = predicted_cov([0.0, 0.0], patch.x0, field, ac, kappa, nodes)?;
    for i in 0..k {
        m[i][i] = diag.value;
        for j in i + 1..k {
            let a = patch.offsets[i];
            let b = patch.offsets[j];
            let c = predicted_cov([a[0] - b[0], a[1] - b[1]], patch.x0, field, ac, kappa, nodes)?;
            m[i][j] = c.value;
            m[j][i] = c.value;
            err = err.max(c.error_estimate);
        }
    }
    err = err.max(diag.error_estimate);
    let eig = DMatrix::from_fn(k, k, |i, j| m[i][j]).symmetric_eigenvalues();
    Ok(PredictedCovariance {
        offsets: patch.offsets.clone(),
        matrix: m,
        c0: diag.value,
        nodes: diag.nodes,
        error_estimate: err,
        min_eigenvalue: eig.min(),
        max_eigenvalue: eig.max(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSumProbe {
    pub a: f64,
    pub b: f64,
    pub psi: f64,
    pub big_psi: f64,
    pub truncation: usize,
    /// Bound on the dropped terms of ψ.
    pub psi_tail_bound: f64,
    /// Bound on the dropped terms of Ψ.
    pub big_psi_tail_bound: f64,
}

fn lattice_power_sum(a: f64, b: f64, fk: &FilteredKernelTable, truncation: usize, power: i32) -> f64 {
    let centre = (a + b).round();
    let r = a + b - centre;
    let j = truncation as i64;
    (-j..=j).map(|n| fk.value(r - n as f64).abs().powi(power)).sum()
}

/// Σ_{n>J} over both sides of (c/(n − ½)²)^p, using |Hφ′(t)| ≤ c/t² far out.
fn lattice_tail_bound(fk: &FilteredKernelTable, truncation: usize, power: i32) -> f64 {
    let c = fk.tail_coefficient.abs();
    let m = truncation as f64 - 0.5;
    let q = 2 * power - 1;
    2.0 * c.powi(power) / (q as f64 * m.powi(q))
}

/// ψ(a, b) = Σ_j [Hφ′(a − j + b)]², summed over the 2J + 1 terms nearest the
/// peak, together with Ψ and the tail bounds.
pub fn psi_sum(a: f64, b: f64, fk: &FilteredKernelTable, truncation: usize) -> Result<LatticeSumProbe> {
    if truncation < 50 {
        return Err(Error::InvalidParameter(format!("truncation must be at least 50, got {truncation}")));
    }
    Ok(LatticeSumProbe {
        a,
        b,
        psi: lattice_power_sum(a, b, fk, truncation, 2),
        big_psi: lattice_power_sum(a, b, fk, truncation, 3),
        truncation,
        psi_tail_bound: lattice_tail_bound(fk, truncation, 2),
        big_psi_tail_bound: lattice_tail_bound(fk, truncation, 3),
    })
}

/// Ψ(a, b) = Σ_j |Hφ′(a − j + b)|³.
pub fn big_psi_sum(a: f64, b: f64, fk: &FilteredKernelTable, truncation: usize) -> Result<f64> {
    Ok(psi_sum(a, b, fk, truncation)?.big_psi)
}

/// ∫₀¹ ψ(r, b) dr by composite Gauss–Legendre.
pub fn psi_mean(b: f64, fk: &FilteredKernelTable, truncation: usize, panels: usize) -> f64 {
    let breaks = [0.0, 1.0];
    composite(&breaks, panels, |r| lattice_power_sum(r, b, fk, truncation, 2))
}

/// ∫(Hφ′)² over the real line: trapezoid on the table plus the far-field tails.
pub fn filtered_energy(fk: &FilteredKernelTable) -> f64 {
    let v = &fk.values;
    let core: f64 = v.iter().map(|x| x * x).sum::<f64>() - 0.5 * (v[0].powi(2) + v[v.len() - 1].powi(2));
    let h = fk.half_range;
    let tail = 2.0 * fk.tail_coefficient.powi(2) / (3.0 * h * h * h);
    core * fk.grid_step + tail
}

/// d_ε = Δα Σ_k ψ(a_k, α_k·χ̌) σ²(α_k, α_k·x₀).
pub fn d_epsilon(grid: &GridSpec, x0: Point, chx: Point, field: &VarianceField, fk: &FilteredKernelTable) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.angle_count {
        let alpha = grid.alpha(k);
        let b = dot(unit(alpha), chx);
        total += lattice_power_sum(grid.a_k(x0, k), b, fk, DEFAULT_TRUNCATION, 2)
            * trajectory_variance(field, x0, alpha);
    }
    grid.delta_alpha * total
}

/// lim d_ε = ∫(Hφ′)² · ∫₀^{2π} σ²(α, α·x₀) dα.
pub fn d_epsilon_limit(x0: Point, field: &VarianceField, fk: &FilteredKernelTable, nodes: usize) -> f64 {
    filtered_energy(fk) * trajectory_integral(x0, field, nodes)
}

/// Calls `visit(k, i, α_k, p_j, f)` for every lattice entry with
/// f = Σ_m θ_m Hφ′(a_k − j + α_k·χ̌_m).
fn for_each_combined_weight(
    grid: &GridSpec,
    patch: &LocalPatch,
    theta: &[f64],
    fk: &FilteredKernelTable,
    mut visit: impl FnMut(usize, usize, f64, f64, f64),
) {
    let j0 = grid.detector_index(0);
    let mut centres = vec![0.0; patch.len()];
    for k in 0..grid.angle_count {
        let alpha = grid.alpha(k);
        let th = unit(alpha);
        let a = grid.a_k(patch.x0, k);
        for (c, chi) in centres.iter_mut().zip(&patch.offsets) {
            *c = a + dot(th, *chi);
        }
        for i in 0..grid.detector_count {
            let j = (j0 + i as i64) as f64;
            let f: f64 = centres.iter().zip(theta).map(|(c, t)| t * fk.value(c - j)).sum();
            visit(k, i, alpha, grid.p(i), f);
        }
    }
}

fn check_theta(patch: &LocalPatch, theta: &[f64]) -> Result<()> {
    if theta.len() != patch.len() {
        return Err(Error::DimensionMismatch { expected: patch.len(), actual: theta.len() });
    }
    if theta.iter().all(|t| *t == 0.0) {
        return Err(Error::ZeroTheta);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTerms {
    /// Σ |f|³ E|η|³
    pub numerator: f64,
    /// Σ f² E η²
    pub variance: f64,
    pub ratio: f64,
}

/// Lyapunov ratio of ξ_ε = θ·N_ε^rec with exact per-entry moments. The FBP
/// prefactor cancels between numerator and denominator.
pub fn lyapunov_terms(
    grid: &GridSpec,
    patch: &LocalPatch,
    theta: &[f64],
    field: &VarianceField,
    fk: &FilteredKernelTable,
    dist: NoiseDistribution,
) -> Result<LyapunovTerms> {
    check_theta(patch, theta)?;
    let mut num = 0.0;
    let mut var = 0.0;
    let mut bad = None;
    for_each_combined_weight(grid, patch, theta, fk, |_, _, alpha, p, f| {
        let s2 = field.sigma2(alpha, p);
        if s2 < 0.0 && bad.is_none() {
            bad = Some((alpha, p, s2));
        }
        let v = s2 * grid.delta_alpha;
        var += f * f * v;
        num += f.abs().powi(3) * dist.abs_third_moment(v);
    });
    if let Some((alpha, p, value)) = bad {
        return Err(Error::NegativeVariance { alpha, p, value });
    }
    if var <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(LyapunovTerms { numerator: num, variance: var, ratio: num / var.powf(1.5) })
}

pub fn lyapunov_ratio(
    grid: &GridSpec,
    x0: Point,
    chx: Point,
    field: &VarianceField,
    fk: &FilteredKernelTable,
    dist: NoiseDistribution,
) -> Result<f64> {
    let patch = LocalPatch::new(x0, vec![chx], grid.epsilon)?;
    Ok(lyapunov_terms(grid, &patch, &[1.0], field, fk, dist)?.ratio)
}

pub fn lyapunov_ratio_multi(
    grid: &GridSpec,
    patch: &LocalPatch,
    theta: &[f64],
    field: &VarianceField,
    fk: &FilteredKernelTable,
    dist: NoiseDistribution,
) -> Result<f64> {
    Ok(lyapunov_terms(grid, patch, theta, field, fk, dist)?.ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    /// E ξ_ε² with σ²(α_k, p_j).
    pub exact: f64,
    /// The same sum with σ²(α_k, α_k·x₀).
    pub frozen: f64,
}

impl SecondMoment {
    pub fn gap(&self) -> f64 {
        (self.exact - self.frozen).abs()
    }
}

/// E(θ·N_ε^rec)² including the FBP prefactor, so it is directly comparable
/// with θᵀCθ.
pub fn second_moment_multi(
    grid: &GridSpec,
    patch: &LocalPatch,
    theta: &[f64],
    field: &VarianceField,
    fk: &FilteredKernelTable,
) -> Result<SecondMoment> {
    check_theta(patch, theta)?;
    let mut exact = 0.0;
    let mut frozen = 0.0;
    let mut k_last = usize::MAX;
    let mut s2_frozen = 0.0;
    for_each_combined_weight(grid, patch, theta, fk, |k, _, alpha, p, f| {
        if k != k_last {
            s2_frozen = trajectory_variance(field, patch.x0, alpha);
            k_last = k;
        }
        exact += f * f * field.sigma2(alpha, p);
        frozen += f * f * s2_frozen;
    });
    // prefactor² · Δα from E η² = σ²Δα
    let scale = (grid.delta_alpha / (4.0 * PI * grid.epsilon)).powi(2) * grid.delta_alpha;
    Ok(SecondMoment { exact: scale * exact, frozen: scale * frozen })
}

/// θᵀ C θ for a predicted covariance.
pub fn quadratic_form(pred: &PredictedCovariance, theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ti) in theta.iter().enumerate() {
        for (j, tj) in theta.iter().enumerate() {
            s += ti * tj * pred.matrix[i][j];
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheorySweepRow {
    pub epsilon: f64,
    pub d_epsilon: f64,
    pub d_limit: f64,
    pub ratio: f64,
    pub exact: f64,
    pub frozen: f64,
    pub gap: f64,
}

/// Evaluates d_ε, the Lyapunov ratio and the second-moment gap of θ·N on a
/// list of ε values. d_ε and the gap use the first patch offset and `theta`
/// respectively.
#[allow(clippy::too_many_arguments)]
pub fn theory_sweep(
    eps_list: &[f64],
    kappa: f64,
    radius: f64,
    patch_offsets: &[Point],
    x0: Point,
    theta: &[f64],
    field: &VarianceField,
    fk: &FilteredKernelTable,
    dist: NoiseDistribution,
) -> Result<Vec<TheorySweepRow>> {
    let d_limit = d_epsilon_limit(x0, field, fk, DEFAULT_NODES);
    eps_list
        .iter()
        .map(|&eps| {
            let grid = crate::scan_geometry::build_grid(eps, kappa, None, radius, Default::default())?;
            let patch = LocalPatch::new(x0, patch_offsets.to_vec(), eps)?;
            let sm = second_moment_multi(&grid, &patch, theta, field, fk)?;
            Ok(TheorySweepRow {
                epsilon: eps,
                d_epsilon: d_epsilon(&grid, x0, patch_offsets[0], field, fk),
                d_limit,
                ratio: lyapunov_ratio_multi(&grid, &patch, theta, field, fk, dist)?,
                exact: sm.exact,
                frozen: sm.frozen,
                gap: sm.gap(),
            })
        })
        .collect()
}

pub fn write_theory_sweep_csv(rows: &[TheorySweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epsilon", "d_epsilon", "d_limit", "ratio", "exact", "frozen", "gap"])?;
    for r in rows {
        w.write_record(
            [r.epsilon, r.d_epsilon, r.d_limit, r.ratio, r.exact, r.frozen, r.gap].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_lab::{build_autocorrelation, build_filtered_kernel, build_keys_kernel};
    use crate::scan_geometry::{build_grid, AngleConvention};

    fn x0() -> Point {
        [2f64.sqrt() / 4.0, 3f64.sqrt() / 4.0]
    }

    fn chx() -> Point {
        let c = 1.0 / 2f64.sqrt();
        [c, c]
    }

    #[test]
    fn cov_at_zero_factorizes() {
        let ac = build_autocorrelation(&build_keys_kernel());
        let f = VarianceField::reference();
        let direct = predicted_cov_scalar([0.0, 0.0], x0(), &f, &ac, 2.0 * PI, 4096).unwrap();
        let fact = (0.5f64).powi(2) * ac.at_zero() * trajectory_integral(x0(), &f, 4096);
        assert!((direct - fact).abs() < 1e-10);
    }

    #[test]
    fn cov_matrix_is_symmetric_and_psd() {
        let ac = build_autocorrelation(&build_keys_kernel());
        let c = chx();
        let patch = LocalPatch::new(
            x0(),
            vec![[0.0, 0.0], [c[0] / 2.0, c[1] / 2.0], [1.0, -0.3], [-2.0, 0.7]],
            1e-3,
        )
        .unwrap();
        let p = predicted_cov_matrix(&patch, &VarianceField::reference(), &ac, 2.0 * PI, 4096).unwrap();
        for i in 0..4 {
            assert_eq!(p.matrix[i][i], p.c0);
            for j in 0..4 {
                assert_eq!(p.matrix[i][j], p.matrix[j][i]);
            }
        }
        assert!(p.is_psd());
    }

    #[test]
    fn too_few_nodes_rejected() {
        let ac = build_autocorrelation(&build_keys_kernel());
        assert!(predicted_cov_scalar([0.0, 0.0], x0(), &VarianceField::reference(), &ac, 1.0, 100).is_err());
    }

    #[test]
    fn psi_is_periodic_and_bounded() {
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        let p0 = psi_sum(0.37, 0.21, &fk, 200).unwrap();
        let p1 = psi_sum(1.37, 0.21, &fk, 200).unwrap();
        assert!((p0.psi - p1.psi).abs() <= 2.0 * p0.psi_tail_bound + 1e-12);
        assert!(p0.psi > 0.0 && p0.big_psi > 0.0);
        assert!(psi_sum(0.0, 0.0, &fk, 10).is_err());
    }

    #[test]
    fn filtered_energy_matches_derivative_energy() {
        // H is an isometry, so ∫(Hφ′)² = ∫(φ′)² = 7/3 for Keys
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        assert!((filtered_energy(&fk) - 7.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_field_gives_zero() {
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        let grid = build_grid(0.02, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let z = VarianceField::constant(0.0);
        assert_eq!(d_epsilon(&grid, x0(), chx(), &z, &fk), 0.0);
        let patch = LocalPatch::new(x0(), vec![[0.0, 0.0]], 0.02).unwrap();
        let sm = second_moment_multi(&grid, &patch, &[1.0], &z, &fk).unwrap();
        assert_eq!(sm.exact, 0.0);
        assert_eq!(sm.frozen, 0.0);
        let err = lyapunov_ratio(&grid, x0(), chx(), &z, &fk, NoiseDistribution::Uniform).unwrap_err();
        assert!(matches!(err, Error::ZeroDenominator));
    }

    #[test]
    fn zero_theta_rejected() {
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        let grid = build_grid(0.02, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let patch = LocalPatch::new(x0(), vec![[0.0, 0.0], chx()], 0.02).unwrap();
        let err = lyapunov_ratio_multi(&grid, &patch, &[0.0, 0.0], &VarianceField::reference(), &fk, NoiseDistribution::Uniform)
            .unwrap_err();
        assert!(matches!(err, Error::ZeroTheta));
    }

    #[test]
    fn single_point_multi_reduces_to_scalar() {
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        let grid = build_grid(0.02, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let f = VarianceField::reference();
        let patch = LocalPatch::new(x0(), vec![chx()], 0.02).unwrap();
        let a = lyapunov_ratio(&grid, x0(), chx(), &f, &fk, NoiseDistribution::Gaussian).unwrap();
        let b = lyapunov_ratio_multi(&grid, &patch, &[1.0], &f, &fk, NoiseDistribution::Gaussian).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_ratio_is_scale_free() {
        let fk = build_filtered_kernel(&build_keys_kernel(), 1e-3, 24.0).unwrap();
        let grid = build_grid(0.02, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let g = NoiseDistribution::Gaussian;
        let a = lyapunov_ratio(&grid, x0(), chx(), &VarianceField::constant(0.4), &fk, g).unwrap();
        let b = lyapunov_ratio(&grid, x0(), chx(), &VarianceField::constant(0.8), &fk, g).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }
}
