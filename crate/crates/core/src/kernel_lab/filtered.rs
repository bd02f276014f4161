use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::autocorr::{cubic_lookup, TabulatedFunction};
use super::Kernel;
use crate::poly::Poly;
use crate::error::{Error, Result};

pub const DEFAULT_GRID_STEP: f64 = 1e-3;
pub const DEFAULT_HALF_RANGE: f64 = 24.0;

/// Relative mismatch allowed between the last table node and the far-field
/// series.
const TAIL_MISMATCH_LIMIT: f64 = 1e-3;

/// Half-width, in table steps, of the band around each break point where
/// `value` switches from cubic interpolation to the closed form. Hφ′ has a
/// (t − b) log|t − b| kink wherever φ″ jumps, and the interpolation error
/// there decays like h⁴/d³ in the distance d; at 40 steps it is below 1e-9.
const KINK_BAND_STEPS: f64 = 40.0;

/// Terms kept in the far-field series. The table always extends to at least
/// four support radii, where the dropped remainder is below 4⁻¹⁶.
const TAIL_TERMS: usize = 24;

/// Dense tabulation of the filtered kernel Hφ′ on `[-half_range, half_range]`
/// with its far-field series beyond.
///
/// Hφ′(t) = (1/π) PV∫ φ′(s) / (s − t) ds. With this orientation the weight
/// `−Δα/(4πε) Hφ′` reconstructs a positive object from its Radon data, and
/// the Fourier transform of Hφ′ is `−|ξ| φ̃(ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredKernelTable {
    pub kernel_name: String,
    pub grid_step: f64,
    pub half_range: f64,
    pub values: Vec<f64>,
    pub tail_coefficient: f64,
    /// Far-field expansion, see [`far_field_series`].
    pub tail_series: Vec<f64>,
    /// Exact form, used near the break points of the kernel.
    pub closed_form: ClosedForm,
}

/// Hφ′(t) = (1/π)[P(t) + Σ_b D_b(t) log|t − b|] with polynomials P and D_b.
///
/// Dividing φ′(s) − φ′(t) by s − t on each piece leaves a polynomial in
/// (s, t) whose s-integral is polynomial in t; the log terms of adjacent
/// pieces share their break point. Exact, but P and the logs cancel for
/// large |t|, so it is only used near the breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub poly: Poly,
    /// (b, D_b) for each break point where D_b does not vanish.
    pub logs: Vec<(f64, Poly)>,
}

impl ClosedForm {
    pub fn from_kernel(kernel: &Kernel) -> Self {
        let mut poly: Vec<f64> = Vec::new();
        let mut logs: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut add_log = |b: f64, q: &[f64], sign: f64| {
            let idx = match logs.iter().position(|(x, _)| *x == b) {
                Some(i) => i,
                None => {
                    logs.push((b, Vec::new()));
                    logs.len() - 1
                }
            };
            let d = &mut logs[idx].1;
            d.resize(d.len().max(q.len()), 0.0);
            for (a, c) in d.iter_mut().zip(q) {
                *a += sign * c;
            }
        };
        for (lo, hi, q) in kernel.derivative_pieces(1) {
            let c = q.coeffs();
            // (sⁿ − tⁿ)/(s − t) = Σ_{i<n} sⁱ t^{n−1−i}
            for (n, &cn) in c.iter().enumerate().skip(1) {
                poly.resize(poly.len().max(n), 0.0);
                for i in 0..n {
                    let k = (i + 1) as i32;
                    poly[n - 1 - i] += cn * (hi.powi(k) - lo.powi(k)) / k as f64;
                }
            }
            add_log(hi, c, 1.0);
            add_log(lo, c, -1.0);
        }
        let scale = poly.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        let logs = logs
            .into_iter()
            .filter(|(_, d)| d.iter().any(|c| c.abs() > 1e-13 * scale))
            .map(|(b, d)| (b, Poly::new(d)))
            .collect();
        ClosedForm { poly: Poly::new(poly), logs }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut total = self.poly.eval(t);
        for (b, d) in &self.logs {
            let dist = (t - b).abs();
            if dist > 0.0 {
                total += d.eval(t) * dist.ln();
            }
        }
        total / PI
    }
}

/// Closed-form Hφ′(t) for a piecewise-polynomial kernel.
///
/// On each piece, φ′(s) = (s − t) r(s) + φ′(t), so the principal value splits
/// into a polynomial integral plus `φ′(t) log|(hi − t)/(lo − t)|`. Log terms at
/// a shared break point combine into `(q_left(t) − q_right(t)) log|x − t|`,
/// which vanishes at `t = x` when φ′ is continuous there.
pub fn hilbert_derivative_exact(kernel: &Kernel, t: f64) -> f64 {
    let mut total = 0.0;
    for (lo, hi, q) in kernel.derivative_pieces(1) {
        let (r, q_at_t) = q.divide_linear(t);
        total += r.integral(lo, hi);
        if q_at_t != 0.0 {
            let dh = (hi - t).abs();
            let dl = (lo - t).abs();
            if dh > 0.0 {
                total += q_at_t * dh.ln();
            }
            if dl > 0.0 {
                total -= q_at_t * dl.ln();
            }
        }
    }
    total / PI
}

/// Tabulates Hφ′ on a uniform grid. Beyond the table the moment series
/// takes over; its agreement with the last nodes guards the tabulation.
pub fn build_filtered_kernel(
    kernel: &Kernel,
    grid_step: f64,
    half_range: f64,
) -> Result<FilteredKernelTable> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidParameter(format!("grid_step must be positive, got {grid_step}")));
    }
    if !(half_range >= 4.0 * kernel.support_radius()) {
        return Err(Error::InvalidParameter(format!(
            "half_range {half_range} must be at least 4x the support radius {}",
            kernel.support_radius()
        )));
    }
    let n = (half_range / grid_step).round() as usize;
    if ((n as f64) * grid_step - half_range).abs() > 1e-9 * half_range {
        return Err(Error::InvalidParameter(format!(
            "half_range {half_range} is not a multiple of grid_step {grid_step}"
        )));
    }
    let values: Vec<f64> = (0..=2 * n)
        .map(|i| hilbert_derivative_exact(kernel, node(i, n, grid_step)))
        .collect();
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "filtered kernel is not finite at t = {} (φ′ discontinuous?)",
            node(bad, n, grid_step)
        )));
    }

    let tail_series = far_field_series(kernel);

    let table = FilteredKernelTable {
        kernel_name: kernel.name().to_string(),
        grid_step,
        half_range,
        values,
        tail_coefficient: tail_series[0],
        tail_series,
        closed_form: ClosedForm::from_kernel(kernel),
    };
    let mismatch = table.boundary_mismatch();
    if mismatch > TAIL_MISMATCH_LIMIT {
        return Err(Error::QuadratureNotConverged {
            relative_change: mismatch,
            context: format!("far-field series at |t| = {half_range}"),
        });
    }
    Ok(table)
}

/// Far-field coefficients of Hφ′: expanding 1/(s − t) in s/t gives
/// Hφ′(t) = (1/π) Σ_{n≥1} n m_{n−1} t^{−(n+1)}, with m_k the k-th moment of φ.
/// Entry `n − 1` holds the coefficient of t^{−(n+1)}.
pub fn far_field_series(kernel: &Kernel) -> Vec<f64> {
    (1..=TAIL_TERMS)
        .map(|n| n as f64 * kernel_moment(kernel, n - 1) / PI)
        .collect()
}

fn kernel_moment(kernel: &Kernel, k: usize) -> f64 {
    let mut mono = vec![0.0; k + 1];
    mono[k] = 1.0;
    let mono = Poly::new(mono);
    kernel
        .pieces()
        .iter()
        .map(|p| p.coeffs.mul(&mono).integral(p.lo, p.hi))
        .sum()
}

fn node(i: usize, n: usize, step: f64) -> f64 {
    (i as f64 - n as f64) * step
}

impl FilteredKernelTable {
    pub fn value(&self, t: f64) -> f64 {
        if t.abs() > self.half_range {
            return self.far_field(t);
        }
        let band = KINK_BAND_STEPS * self.grid_step;
        if self.closed_form.logs.iter().any(|(b, _)| (t - b).abs() < band) {
            self.closed_form.eval(t)
        } else {
            cubic_lookup(&self.values, self.grid_step, self.half_range, t)
        }
    }

    /// Far-field expansion, used beyond the table.
    pub fn far_field(&self, t: f64) -> f64 {
        let u = 1.0 / t;
        u * u * self.tail_series.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// Number of nodes on each side of zero.
    pub fn half_nodes(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    /// Largest relative gap between the table and the far-field series at
    /// the two end nodes.
    pub fn boundary_mismatch(&self) -> f64 {
        let asym = self.far_field(self.half_range);
        let first = self.values[0];
        let last = *self.values.last().unwrap();
        ((first - asym).abs()).max((last - asym).abs()) / asym.abs().max(f64::MIN_POSITIVE)
    }

    /// max_i |value(t_i) − value(−t_i)| over the table nodes.
    pub fn evenness_defect(&self) -> f64 {
        let n = self.values.len();
        (0..n / 2)
            .map(|i| (self.values[i] - self.values[n - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

impl TabulatedFunction for FilteredKernelTable {
    fn value(&self, t: f64) -> f64 {
        FilteredKernelTable::value(self, t)
    }
    fn grid_step(&self) -> f64 {
        self.grid_step
    }
    fn half_range(&self) -> f64 {
        self.half_range
    }
    fn tail_coefficient(&self) -> f64 {
        self.tail_coefficient
    }
    fn node_values(&self) -> &[f64] {
        &self.values
    }
}
