use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::{Error, Result};
use crate::quadrature;

/// A function sampled on the uniform grid `-half_range + i * grid_step`, with
/// an optional `c / t²` asymptote outside the grid.
pub trait TabulatedFunction {
    fn value(&self, t: f64) -> f64;
    fn grid_step(&self) -> f64;
    fn half_range(&self) -> f64;
    /// Zero for compactly supported tables.
    fn tail_coefficient(&self) -> f64;
    fn node_values(&self) -> &[f64];
}

/// Four-point Lagrange interpolation on a uniform table centred at zero.
pub(crate) fn cubic_lookup(values: &[f64], step: f64, half_range: f64, t: f64) -> f64 {
    let pos = (t + half_range) / step;
    let last = values.len() - 1;
    let i = (pos.floor() as isize).clamp(1, last as isize - 2) as usize;
    let u = pos - i as f64;
    let wm = -u * (u - 1.0) * (u - 2.0) / 6.0;
    let w0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
    let w1 = -(u + 1.0) * u * (u - 2.0) / 2.0;
    let w2 = (u + 1.0) * u * (u - 1.0) / 6.0;
    wm * values[i - 1] + w0 * values[i] + w1 * values[i + 1] + w2 * values[i + 2]
}

/// Tabulated (φ′⋆φ′)(t) = ∫ φ′(t + s) φ′(s) ds, zero for |t| ≥ 2·support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub kernel_name: String,
    pub grid_step: f64,
    pub half_range: f64,
    pub values: Vec<f64>,
    pub exact_support_radius: f64,
}

/// Exact piecewise-polynomial evaluation of (φ′⋆φ′)(t).
pub fn autocorrelation_exact(kernel: &Kernel, t: f64) -> f64 {
    let mut total = 0.0;
    for (alo, ahi, qa) in kernel.derivative_pieces(1) {
        let shifted = qa.shifted(t);
        for (blo, bhi, qb) in kernel.derivative_pieces(1) {
            let lo = (alo - t).max(blo);
            let hi = (ahi - t).min(bhi);
            if lo < hi {
                total += shifted.mul(qb).integral(lo, hi);
            }
        }
    }
    total
}

pub fn build_autocorrelation(kernel: &Kernel) -> Autocorrelation {
    build_autocorrelation_with_step(kernel, super::DEFAULT_GRID_STEP)
        .expect("default autocorrelation step is valid")
}

pub fn build_autocorrelation_with_step(kernel: &Kernel, grid_step: f64) -> Result<Autocorrelation> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidParameter(format!("grid_step must be positive, got {grid_step}")));
    }
    let radius = 2.0 * kernel.support_radius();
    let n = (radius / grid_step - 1e-9).ceil() as usize;
    let half_range = n as f64 * grid_step;
    let values = (0..=2 * n)
        .map(|i| {
            let t = (i as f64 - n as f64) * grid_step;
            if t.abs() >= radius {
                0.0
            } else {
                autocorrelation_exact(kernel, t)
            }
        })
        .collect();
    Ok(Autocorrelation {
        kernel_name: kernel.name().to_string(),
        grid_step,
        half_range,
        values,
        exact_support_radius: radius,
    })
}

impl Autocorrelation {
    pub fn value(&self, t: f64) -> f64 {
        if t.abs() >= self.exact_support_radius {
            0.0
        } else {
            cubic_lookup(&self.values, self.grid_step, self.half_range, t)
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.values[(self.values.len() - 1) / 2]
    }
}

impl TabulatedFunction for Autocorrelation {
    fn value(&self, t: f64) -> f64 {
        Autocorrelation::value(self, t)
    }
    fn grid_step(&self) -> f64 {
        self.grid_step
    }
    fn half_range(&self) -> f64 {
        self.half_range
    }
    fn tail_coefficient(&self) -> f64 {
        0.0
    }
    fn node_values(&self) -> &[f64] {
        &self.values
    }
}

/// (f⋆g)(t) = ∫ f(t + s) g(s) ds: trapezoid on g's nodes plus, when g has a
/// `c/t²` tail, the outer integrals after the substitution u = 1/s.
pub fn cross_correlate(f: &dyn TabulatedFunction, g: &dyn TabulatedFunction, t: f64) -> f64 {
    let h = g.grid_step();
    let big_h = g.half_range();
    let nodes = g.node_values();
    let last = nodes.len() - 1;
    let mut core = 0.0;
    for (i, &gv) in nodes.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let s = -big_h + i as f64 * h;
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        core += w * f.value(t + s) * gv;
    }
    core *= h;

    let c = g.tail_coefficient();
    if c == 0.0 {
        return core;
    }
    let umax = 1.0 / big_h;
    let breaks: Vec<f64> = (0..=32).map(|i| umax * i as f64 / 32.0).collect();
    let right = quadrature::composite(&breaks, 1, |u| {
        if u == 0.0 {
            0.0
        } else {
            c * f.value(t + 1.0 / u)
        }
    });
    let left = quadrature::composite(&breaks, 1, |u| {
        if u == 0.0 {
            0.0
        } else {
            c * f.value(t - 1.0 / u)
        }
    });
    core + right + left
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_lab::{build_keys_kernel, derivative_energy};

    #[test]
    fn compact_support_and_evenness() {
        let k = build_keys_kernel();
        let ac = build_autocorrelation(&k);
        assert_eq!(ac.exact_support_radius, 4.0);
        for &t in &[4.0, 4.5, -4.0, 10.0] {
            assert_eq!(ac.value(t), 0.0);
        }
        assert!((autocorrelation_exact(&k, 1.5) - autocorrelation_exact(&k, -1.5)).abs() < 1e-13);
        assert!((ac.value(1.5) - ac.value(-1.5)).abs() < 1e-13);
        assert!(autocorrelation_exact(&k, 3.999_999).abs() < 1e-12);
    }

    #[test]
    fn value_at_zero_is_derivative_energy() {
        let k = build_keys_kernel();
        let ac = build_autocorrelation(&k);
        assert!((ac.at_zero() - derivative_energy(&k)).abs() < 1e-13);
    }

    #[test]
    fn maximal_at_zero() {
        let k = build_keys_kernel();
        let ac = build_autocorrelation(&k);
        let peak = ac.at_zero();
        assert!(ac.values.iter().all(|&v| v <= peak + 1e-15));
    }

    #[test]
    fn zero_table_correlates_to_zero() {
        let k = build_keys_kernel();
        let ac = build_autocorrelation_with_step(&k, 1e-2).unwrap();
        let mut zero = ac.clone();
        zero.values.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(cross_correlate(&zero, &ac, 0.7), 0.0);
        assert!(cross_correlate(&ac, &ac, 0.0) > 0.0);
    }
}
