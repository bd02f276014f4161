//! Independent numerical routes to the kernel-derived quantities, used to
//! certify the tables: a principal-value quadrature for Hφ′, a spectral
//! quadrature for Hφ′ and for the Parseval constant, and the kernel check
//! suite run by `kernel-check`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{cross_correlate, derivative_energy, Autocorrelation, FilteredKernelTable, Kernel};
use crate::error::Result;
use crate::quadrature;

/// Hφ′(t) = (1/π) PV∫ φ′(s)/(s − t) ds by symmetric excision of
/// `(t − δ, t + δ)` and Richardson extrapolation in δ.
///
/// After pairing s = t ± u the integrand `[φ′(t+u) − φ′(t−u)]/u` is bounded,
/// so I(δ) = I(0) + a₁δ + a₂δ² + ..., and three halvings remove two orders.
pub fn pv_hilbert_derivative(kernel: &Kernel, t: f64) -> Result<f64> {
    let reach = t.abs() + kernel.support_radius();
    let mut splits: Vec<f64> = kernel
        .breakpoints()
        .into_iter()
        .map(|b| (b - t).abs())
        .filter(|&u| u > 0.0 && u < reach)
        .collect();
    splits.push(reach);
    splits.sort_by(f64::total_cmp);
    splits.dedup();

    let excised = |delta: f64| -> Result<f64> {
        let integrand = |u: f64| {
            let plus = kernel.eval(t + u, 1).unwrap_or(0.0);
            let minus = kernel.eval(t - u, 1).unwrap_or(0.0);
            (plus - minus) / u
        };
        let mut lo = delta;
        let mut total = 0.0;
        for &hi in splits.iter().filter(|&&u| u > delta) {
            total += quadrature::adaptive(lo, hi, 1e-14, integrand)?;
            lo = hi;
        }
        Ok(total / PI)
    };

    let d = 1e-3;
    let i1 = excised(d)?;
    let i2 = excised(d / 2.0)?;
    let i3 = excised(d / 4.0)?;
    let r1 = 2.0 * i2 - i1;
    let r2 = 2.0 * i3 - i2;
    Ok((4.0 * r2 - r1) / 3.0)
}

/// Upper frequency for the spectral quadratures; the integrands decay like
/// λ⁻² (Hφ′) and λ⁻⁴ (Parseval) beyond it.
const SPECTRAL_CUTOFF: f64 = 4000.0;

/// Hφ′(t) = −(1/π) ∫₀^∞ λ φ̃(λ) cos(λt) dλ for an even kernel, truncated at
/// a large cutoff. Coarser than the PV route; used as a cross-check.
pub fn spectral_hilbert_derivative(kernel: &Kernel, t: f64) -> f64 {
    let panels = (SPECTRAL_CUTOFF * (1.0 + t.abs()) / 2.0).ceil() as usize;
    let breaks = [0.0, SPECTRAL_CUTOFF];
    -quadrature::composite(&breaks, panels, |l| l * kernel.spectrum(l).re * (l * t).cos()) / PI
}

/// (2π)⁻¹ ∫ |λ φ̃(λ)|² dλ, the constant C = ∫ (Hφ′)² = ∫ (φ′)².
pub fn parseval_constant(kernel: &Kernel) -> f64 {
    let breaks = [0.0, SPECTRAL_CUTOFF];
    let panels = (SPECTRAL_CUTOFF * 2.0) as usize;
    quadrature::composite(&breaks, panels, |l| (l * kernel.spectrum(l)).norm_sqr()) / PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, value: f64, reference: f64, error: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            value,
            reference,
            error,
            tolerance,
            passed: error.is_finite() && error <= tolerance,
        }
    }

    fn absolute(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        Self::new(name, value, reference, (value - reference).abs(), tolerance)
    }

    fn relative(name: impl Into<String>, value: f64, reference: f64, tolerance: f64) -> Self {
        Self::new(name, value, reference, (value - reference).abs() / reference.abs(), tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheckReport {
    pub kernel: String,
    pub smoothness_m: u32,
    pub parseval_constant: f64,
    pub checks: Vec<CheckResult>,
}

impl KernelCheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const PV_PROBES: [f64; 3] = [0.25, 1.0, 3.0];
pub const CORRELATION_PROBES: [f64; 3] = [0.0, 0.3, 1.1];

pub const PV_TOLERANCE: f64 = 1e-6;
pub const SPECTRAL_TOLERANCE: f64 = 1e-5;
pub const PARSEVAL_TOLERANCE: f64 = 1e-5;
pub const IDENTITY_TOLERANCE: f64 = 2e-5;

/// Runs every kernel invariant and oracle comparison.
pub fn run_kernel_checks(
    kernel: &Kernel,
    filtered: &FilteredKernelTable,
    ac: &Autocorrelation,
) -> Result<KernelCheckReport> {
    let mut checks = Vec::new();

    let mass: f64 = kernel.pieces().iter().map(|p| p.coeffs.integral(p.lo, p.hi)).sum();
    checks.push(CheckResult::absolute("unit_mass", mass, 1.0, 1e-12));

    // partition of unity at 1000 low-discrepancy points in [0, 1)
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let r = kernel.support_radius().ceil() as i64 + 1;
    let worst = (1..=1000)
        .map(|i| {
            let t = (i as f64 * golden).fract();
            let s: f64 = (-r..=r).map(|j| kernel.value(t - j as f64)).sum();
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max);
    checks.push(CheckResult::new("partition_of_unity", worst, 0.0, worst, 1e-12));

    for &t in &PV_PROBES {
        let oracle = pv_hilbert_derivative(kernel, t)?;
        checks.push(CheckResult::absolute(
            format!("filtered_vs_pv_oracle(t={t})"),
            filtered.value(t),
            oracle,
            PV_TOLERANCE,
        ));
        checks.push(CheckResult::absolute(
            format!("filtered_vs_spectral(t={t})"),
            filtered.value(t),
            spectral_hilbert_derivative(kernel, t),
            SPECTRAL_TOLERANCE,
        ));
    }

    if kernel.is_even() {
        let defect = filtered.evenness_defect();
        checks.push(CheckResult::new("filtered_evenness", defect, 0.0, defect, 1e-10));
    }
    let mismatch = filtered.boundary_mismatch();
    checks.push(CheckResult::new("filtered_far_field_match", mismatch, 0.0, mismatch, 1e-3));

    let parseval = parseval_constant(kernel);
    let table_energy = cross_correlate(filtered, filtered, 0.0);
    checks.push(CheckResult::relative("parseval", table_energy, parseval, PARSEVAL_TOLERANCE));
    checks.push(CheckResult::relative(
        "parseval_vs_exact_energy",
        parseval,
        derivative_energy(kernel),
        PARSEVAL_TOLERANCE,
    ));

    let ac_zero_quad = quadrature::composite(&kernel.breakpoints(), 4, |s| {
        let d = kernel.eval(s, 1).unwrap_or(0.0);
        d * d
    });
    checks.push(CheckResult::absolute("autocorrelation_at_zero", ac.at_zero(), ac_zero_quad, 1e-10));

    for &t in &CORRELATION_PROBES {
        checks.push(CheckResult::absolute(
            format!("filtered_autocorrelation_identity(t={t})"),
            cross_correlate(filtered, filtered, t),
            ac.value(t),
            IDENTITY_TOLERANCE,
        ));
    }

    let outside = [1.0, 1.5, 3.0]
        .iter()
        .map(|m| ac.value(ac.exact_support_radius * m).abs())
        .fold(0.0, f64::max);
    checks.push(CheckResult::new("autocorrelation_support", outside, 0.0, outside, 0.0));

    Ok(KernelCheckReport {
        kernel: kernel.name().to_string(),
        smoothness_m: kernel.smoothness_m(),
        parseval_constant: parseval,
        checks,
    })
}
