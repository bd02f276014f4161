//! Gauss–Legendre panels, an adaptive bisection driver, and the periodic
//! trapezoid rule.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

const PANEL_DEGREE: usize = 16;

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(PANEL_DEGREE).unwrap()))
}

/// Single Gauss–Legendre panel on `[a, b]`.
pub fn gl_panel<F: FnMut(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    rule().integrate(a, b, f)
}

/// Composite Gauss–Legendre over the sorted break points, splitting every
/// segment into `panels` equal panels.
pub fn composite<F: FnMut(f64) -> f64>(breaks: &[f64], panels: usize, mut f: F) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / panels as f64;
        for i in 0..panels {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == panels { b } else { lo + h };
            total += gl_panel(lo, hi, &mut f);
        }
    }
    total
}

/// Adaptive bisection on Gauss–Legendre panels until the two-half estimate
/// agrees with the whole-panel estimate to `tol` (absolute).
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> Result<f64> {
    fn recurse<F: FnMut(f64) -> f64>(
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        floor: f64,
        depth: u32,
        f: &mut F,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let left = gl_panel(a, m, &mut *f);
        let right = gl_panel(m, b, &mut *f);
        let diff = (left + right - whole).abs();
        if diff <= tol {
            return Ok(left + right);
        }
        if depth == 0 {
            return Err(Error::QuadratureNotConverged {
                relative_change: diff / whole.abs().max(f64::MIN_POSITIVE),
                context: format!("adaptive panel [{a}, {b}]"),
            });
        }
        let sub = (0.5 * tol).max(floor);
        Ok(recurse(a, m, left, sub, floor, depth - 1, f)? + recurse(m, b, right, sub, floor, depth - 1, f)?)
    }
    if b <= a {
        return Ok(0.0);
    }
    let whole = gl_panel(a, b, &mut f);
    let floor = 64.0 * f64::EPSILON * whole.abs();
    recurse(a, b, whole, tol.max(floor), floor, 40, &mut f)
}

/// Trapezoid estimate of a periodic integral together with the
/// node-halving difference used as an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeriodicEstimate {
    pub value: f64,
    pub nodes: usize,
    pub error_estimate: f64,
}

/// Trapezoid rule over one period `[0, period)` with `nodes` equispaced nodes.
/// `nodes` should be even so the half-rule reuses every other node.
pub fn periodic_trapezoid<F: FnMut(f64) -> f64>(period: f64, nodes: usize, mut f: F) -> PeriodicEstimate {
    let h = period / nodes as f64;
    let mut even = 0.0;
    let mut odd = 0.0;
    for i in 0..nodes {
        let v = f(i as f64 * h);
        if i % 2 == 0 {
            even += v;
        } else {
            odd += v;
        }
    }
    let full = (even + odd) * h;
    let half = even * 2.0 * h;
    PeriodicEstimate {
        value: full,
        nodes,
        error_estimate: (full - half).abs(),
    }
}
