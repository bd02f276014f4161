//! The discrete observation lattice (α_k, p_j), local patches x₀ + εχ̌ and the
//! Diophantine diagnostics on κ|x₀|.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_model::VarianceField;

/// A point or offset in the plane.
pub type Point = [f64; 2];

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn unit(alpha: f64) -> Point {
    [alpha.cos(), alpha.sin()]
}

/// How the full circle of angles is enumerated. Both cover one period; the
/// choice only permutes the angular sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// α_k = kΔα for k = 1..=n, i.e. (0, 2π].
    #[default]
    FullCircle,
    /// α_k = kΔα with α_k ∈ (−π, π].
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Detector step Δp.
    pub epsilon: f64,
    /// Δα / Δp.
    pub kappa: f64,
    pub delta_alpha: f64,
    pub p_bar: f64,
    /// Half-width P of the detector coverage.
    pub radius: f64,
    pub convention: AngleConvention,
    pub angle_min_index: i64,
    pub angle_count: usize,
    pub detector_min_index: i64,
    pub detector_count: usize,
}

/// Builds the lattice. Without an explicit `p_bar`, detectors are placed at
/// p_j = −mε + (j − 1)ε for j = 1..=2m+1 with m = ⌈P/ε⌉ (so p̄ = −mε − ε).
pub fn build_grid(
    epsilon: f64,
    kappa: f64,
    p_bar: Option<f64>,
    radius: f64,
    convention: AngleConvention,
) -> Result<GridSpec> {
    if !(epsilon > 0.0) || !(kappa > 0.0) || !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon, kappa and P must be positive (got {epsilon}, {kappa}, {radius})"
        )));
    }
    let delta_alpha = kappa * epsilon;
    if delta_alpha > PI / 4.0 {
        return Err(Error::CoarseAngularStep { delta_alpha });
    }
    let angle_count = (2.0 * PI / delta_alpha).round() as usize;
    let angle_min_index = match convention {
        AngleConvention::FullCircle => 1,
        AngleConvention::Symmetric => -(angle_count.div_ceil(2) as i64) + 1,
    };

    let (p_bar, detector_min_index, detector_count) = match p_bar {
        None => {
            let m = (radius / epsilon - 1e-9).ceil() as i64;
            (-(m as f64) * epsilon - epsilon, 1, (2 * m + 1) as usize)
        }
        Some(pb) => {
            let lo = ((-radius - pb) / epsilon - 1e-9).ceil() as i64;
            let hi = ((radius - pb) / epsilon + 1e-9).floor() as i64;
            if hi < lo {
                return Err(Error::InvalidParameter("detector range is empty".into()));
            }
            (pb, lo, (hi - lo + 1) as usize)
        }
    };

    Ok(GridSpec {
        epsilon,
        kappa,
        delta_alpha,
        p_bar,
        radius,
        convention,
        angle_min_index,
        angle_count,
        detector_min_index,
        detector_count,
    })
}

impl GridSpec {
    /// Angle for local index `i` in `0..angle_count`.
    pub fn alpha(&self, i: usize) -> f64 {
        (self.angle_min_index + i as i64) as f64 * self.delta_alpha
    }

    /// Detector offset for local index `i` in `0..detector_count`.
    pub fn p(&self, i: usize) -> f64 {
        self.p_bar + self.detector_index(i) as f64 * self.epsilon
    }

    /// Lattice index j for local detector index `i`.
    pub fn detector_index(&self, i: usize) -> i64 {
        self.detector_min_index + i as i64
    }

    pub fn angle_index(&self, i: usize) -> i64 {
        self.angle_min_index + i as i64
    }

    pub fn angles(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.angle_count).map(|i| self.alpha(i))
    }

    pub fn detectors(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.detector_count).map(|i| self.p(i))
    }

    pub fn len(&self) -> usize {
        self.angle_count * self.detector_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// a_k = (α_k·x₀ − p̄)/ε for local angle index `i`.
    pub fn a_k(&self, x0: Point, i: usize) -> f64 {
        (dot(unit(self.alpha(i)), x0) - self.p_bar) / self.epsilon
    }
}

/// a_k for the lattice angle index `k` (not the local index).
pub fn a_k_of(grid: &GridSpec, x0: Point, k: i64) -> f64 {
    let alpha = k as f64 * grid.delta_alpha;
    (dot(unit(alpha), x0) - grid.p_bar) / grid.epsilon
}

/// Points x₀ + εχ̌ around a centre, in dimensionless offsets χ̌.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPatch {
    pub x0: Point,
    pub offsets: Vec<Point>,
    pub epsilon: f64,
}

impl LocalPatch {
    pub fn new(x0: Point, offsets: Vec<Point>, epsilon: f64) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter("patch needs at least one offset".into()));
        }
        for (i, a) in offsets.iter().enumerate() {
            for b in &offsets[i + 1..] {
                if a == b {
                    return Err(Error::InvalidParameter(format!(
                        "patch offsets must be distinct, {a:?} repeats"
                    )));
                }
            }
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter("patch epsilon must be positive".into()));
        }
        Ok(LocalPatch { x0, offsets, epsilon })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn physical_points(&self) -> Vec<Point> {
        self.offsets
            .iter()
            .map(|o| [self.x0[0] + self.epsilon * o[0], self.x0[1] + self.epsilon * o[1]])
            .collect()
    }
}

/// Denominators beyond this are below the resolution of an f64 input.
const RELIABLE_DENOMINATOR: f64 = 1e7;
const HUGE_QUOTIENT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub kappa_x0_norm: f64,
    pub continued_fraction_quotients: Vec<u64>,
    /// Growth-based estimate of the irrationality type; `None` when too few
    /// convergents are available.
    pub estimated_type_nu: Option<f64>,
    pub rational_flag: bool,
    pub sigma_positivity: bool,
    /// Longest α-interval on which σ²(α, α·x₀) > 0 was observed.
    pub positivity_interval: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Continued-fraction expansion of the exact binary value of `x`, stopped at
/// `depth` quotients or once convergent denominators pass f64 resolution.
/// Returns the quotients and whether the expansion terminated.
pub fn continued_fraction(x: f64, depth: usize) -> (Vec<u64>, bool) {
    let Some(r) = BigRational::from_float(x.abs()) else {
        return (Vec::new(), false);
    };
    let mut num: BigInt = r.numer().clone();
    let mut den: BigInt = r.denom().clone();
    let mut quotients = Vec::new();
    let (mut q_prev, mut q) = (0.0_f64, 1.0_f64);
    while quotients.len() < depth {
        if den.is_zero() {
            return (quotients, true);
        }
        let (a, rem) = num.div_mod_floor(&den);
        let a = a.abs().to_u64().unwrap_or(u64::MAX);
        quotients.push(a);
        if rem.is_zero() {
            return (quotients, true);
        }
        num = den;
        den = rem;
        if quotients.len() > 1 {
            let q_next = a as f64 * q + q_prev;
            q_prev = q;
            q = q_next;
            if q > RELIABLE_DENOMINATOR {
                break;
            }
        }
    }
    (quotients, false)
}

/// limsup of log q_{n+1} / log q_n over the second half of the convergents.
fn type_estimate(quotients: &[u64]) -> Option<f64> {
    let mut denominators = Vec::new();
    let (mut q_prev, mut q) = (0.0_f64, 1.0_f64);
    for &a in quotients.iter().skip(1) {
        let next = a as f64 * q + q_prev;
        q_prev = q;
        q = next;
        denominators.push(q);
    }
    let usable: Vec<f64> = denominators.into_iter().filter(|&q| q >= 2.0).collect();
    if usable.len() < 5 {
        return None;
    }
    let ratios: Vec<f64> = usable.windows(2).map(|w| w[1].ln() / w[0].ln()).collect();
    let start = ratios.len() / 2;
    ratios[start..].iter().copied().reduce(f64::max)
}

pub fn check_assumptions(
    grid: &GridSpec,
    x0: Point,
    field: &VarianceField,
    depth: usize,
) -> Result<AssumptionReport> {
    if depth < 10 {
        return Err(Error::InvalidParameter(format!("depth must be at least 10, got {depth}")));
    }
    let s = grid.kappa * dot(x0, x0).sqrt();
    let (quotients, terminated) = continued_fraction(s, depth);
    let huge = quotients.iter().skip(1).any(|&a| a > HUGE_QUOTIENT);
    let rational_flag = terminated || huge;
    let estimated_type_nu = if rational_flag { None } else { type_estimate(&quotients) };

    let samples = 4096;
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for i in 0..=samples {
        let positive = i < samples && {
            let alpha = 2.0 * PI * i as f64 / samples as f64;
            field.sigma2(alpha, dot(unit(alpha), x0)) > 0.0
        };
        match (positive, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(start)) => {
                if best.is_none_or(|(a, b)| i - start > b - a) {
                    best = Some((start, i));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    let positivity_interval = best.map(|(a, b)| {
        let h = 2.0 * PI / samples as f64;
        (a as f64 * h, (b - 1) as f64 * h)
    });

    let mut warnings = Vec::new();
    if rational_flag {
        warnings.push(format!(
            "kappa*|x0| = {s} is rational or nearly so; lattice-sum limits are not guaranteed"
        ));
    } else if estimated_type_nu.is_none() {
        warnings.push("irrationality type inconclusive from available convergents".into());
    }
    if positivity_interval.is_none() {
        warnings.push("sigma^2(alpha, alpha.x0) vanishes on the whole trajectory".into());
    }

    Ok(AssumptionReport {
        kappa_x0_norm: s,
        continued_fraction_quotients: quotients,
        estimated_type_nu,
        rational_flag,
        sigma_positivity: positivity_interval.is_some(),
        positivity_interval,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_lattice_dimensions() {
        let g = build_grid(1e-3, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        assert_eq!(g.angle_count, 1000);
        assert_eq!(g.detector_count, 2001);
        assert!((g.p(0) + 1.0).abs() < 1e-12);
        assert!((g.p(2000) - 1.0).abs() < 1e-12);
        assert!((g.alpha(0) - 2.0 * PI / 1000.0).abs() < 1e-15);
        assert!((g.alpha(999) - 2.0 * PI).abs() < 1e-12);
        assert_eq!(g.delta_alpha, g.kappa * g.epsilon);
    }

    #[test]
    fn coarse_angles_are_rejected() {
        let err = build_grid(0.5, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap_err();
        assert!(matches!(err, Error::CoarseAngularStep { .. }));
    }

    #[test]
    fn symmetric_convention_covers_half_open_circle() {
        let g = build_grid(1e-2, 2.0 * PI, None, 1.0, AngleConvention::Symmetric).unwrap();
        let first = g.alpha(0);
        let last = g.alpha(g.angle_count - 1);
        assert!(first > -PI && (last - PI).abs() < 1e-12);
    }

    #[test]
    fn explicit_p_bar_covers_radius() {
        let g = build_grid(0.1, 1.0, Some(0.05), 1.0, AngleConvention::FullCircle).unwrap();
        assert!(g.p(0) >= -1.0 - 1e-12 && g.p(0) < -0.9);
        let last = g.p(g.detector_count - 1);
        assert!(last <= 1.0 + 1e-12 && last > 0.9);
    }

    #[test]
    fn a_k_trivial_cases() {
        let g = build_grid(0.1, 2.0, Some(0.0), 1.0, AngleConvention::FullCircle).unwrap();
        assert_eq!(a_k_of(&g, [0.0, 0.0], 3), 0.0);
        assert!((a_k_of(&g, [1.0, 0.0], 0) - 10.0).abs() < 1e-12);
        assert_eq!(g.a_k([0.3, 0.2], 4), a_k_of(&g, [0.3, 0.2], g.angle_index(4)));
    }

    #[test]
    fn patch_rejects_repeated_offsets() {
        assert!(LocalPatch::new([0.0, 0.0], vec![[1.0, 0.0], [1.0, 0.0]], 0.1).is_err());
    }

    #[test]
    fn continued_fractions() {
        let (q, done) = continued_fraction(3.0, 12);
        assert_eq!(q, vec![3]);
        assert!(done);
        let golden = 0.5 * (1.0 + 5f64.sqrt());
        let (q, done) = continued_fraction(golden, 30);
        assert!(!done);
        assert!(q.iter().all(|&a| a == 1), "{q:?}");
        let (q, _) = continued_fraction(2f64.sqrt(), 15);
        assert_eq!(q[0], 1);
        assert!(q[1..].iter().all(|&a| a == 2));
    }

    #[test]
    fn golden_ratio_has_type_near_one() {
        let g = build_grid(1e-2, 1.0, None, 1.0, AngleConvention::FullCircle).unwrap();
        let golden = 0.5 * (1.0 + 5f64.sqrt());
        let rep = check_assumptions(&g, [golden, 0.0], &VarianceField::constant(1.0), 30).unwrap();
        assert!(!rep.rational_flag);
        let nu = rep.estimated_type_nu.unwrap();
        assert!((nu - 1.0).abs() < 0.1, "nu = {nu}");
    }

    #[test]
    fn rational_norm_is_flagged() {
        let g = build_grid(1e-2, 1.0, None, 1.0, AngleConvention::FullCircle).unwrap();
        let rep = check_assumptions(&g, [3.0, 0.0], &VarianceField::constant(1.0), 10).unwrap();
        assert!(rep.rational_flag);
        assert!(!rep.warnings.is_empty());
    }

    #[test]
    fn reference_point_passes_diagnostics() {
        let g = build_grid(1e-3, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let x0 = [2f64.sqrt() / 4.0, 3f64.sqrt() / 4.0];
        let rep = check_assumptions(&g, x0, &VarianceField::reference(), 12).unwrap();
        assert!(!rep.rational_flag);
        assert!(rep.sigma_positivity);
        assert!(rep.continued_fraction_quotients.len() >= 10);
    }

    #[test]
    fn vanishing_field_fails_positivity() {
        let g = build_grid(1e-2, 2.0 * PI, None, 1.0, AngleConvention::FullCircle).unwrap();
        let rep = check_assumptions(&g, [0.3, 0.1], &VarianceField::constant(0.0), 10).unwrap();
        assert!(!rep.sigma_positivity);
    }
}
