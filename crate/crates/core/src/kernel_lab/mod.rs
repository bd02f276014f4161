//! Interpolation kernels and the kernel-derived objects used by the noise
//! predictor: the derivative φ′, the filtered kernel Hφ′ (the per-sample FBP
//! weight) and the autocorrelation φ′⋆φ′.
//!
//! Kernels are piecewise polynomials with compact support. Everything else in
//! this module is computed from the pieces, so user-supplied kernels get the
//! same treatment as the built-in Keys kernel.

mod autocorr;
mod cache;
mod filtered;
pub mod oracle;

pub use autocorr::{
    autocorrelation_exact, build_autocorrelation, build_autocorrelation_with_step,
    cross_correlate, Autocorrelation, TabulatedFunction,
};
pub use cache::{shared_tables, KernelTables};
pub use filtered::{
    build_filtered_kernel, hilbert_derivative_exact, ClosedForm, FilteredKernelTable, DEFAULT_GRID_STEP,
    DEFAULT_HALF_RANGE,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quadrature;

pub const KERNEL_SCHEMA_VERSION: u32 = 1;

/// One polynomial piece of a kernel, valid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Poly,
}

/// Compactly supported piecewise-polynomial interpolation kernel φ.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    name: String,
    pieces: Vec<Piece>,
    /// derivative polynomials per piece, orders 0..=3
    derivs: Vec<[Poly; 4]>,
    support_radius: f64,
    smoothness_m: u32,
    even: bool,
}

/// Versioned JSON form of a [`Kernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub schema: u32,
    pub name: String,
    pub even: bool,
    pub pieces: Vec<Piece>,
}

impl Kernel {
    /// Builds a kernel from sorted, non-overlapping pieces. Checks unit mass
    /// and, if `even` is set, symmetry.
    pub fn new(name: impl Into<String>, mut pieces: Vec<Piece>, even: bool) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidParameter("kernel needs at least one piece".into()));
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for p in &pieces {
            if !(p.lo < p.hi) || !p.lo.is_finite() || !p.hi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "bad piece interval [{}, {}]",
                    p.lo, p.hi
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(Error::InvalidParameter("kernel pieces overlap".into()));
            }
        }
        let derivs = pieces
            .iter()
            .map(|p| {
                let d1 = p.coeffs.derivative();
                let d2 = d1.derivative();
                let d3 = d2.derivative();
                [p.coeffs.clone(), d1, d2, d3]
            })
            .collect();
        let support_radius = pieces
            .iter()
            .map(|p| p.lo.abs().max(p.hi.abs()))
            .fold(0.0, f64::max);
        let mut kernel = Kernel {
            name: name.into(),
            pieces,
            derivs,
            support_radius,
            smoothness_m: 0,
            even,
        };
        let mass = kernel.mass();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "kernel must have unit mass, got {mass}"
            )));
        }
        if even {
            let r = kernel.support_radius;
            for i in 0..=200 {
                let t = r * i as f64 / 200.0;
                let (a, b) = (kernel.value(t), kernel.value(-t));
                if (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "kernel flagged even but φ({t}) = {a} != φ(-{t}) = {b}"
                    )));
                }
            }
        }
        kernel.smoothness_m = kernel.continuity_order();
        Ok(kernel)
    }

    /// Keys cubic convolution kernel with free parameter `a`.
    pub fn keys(a: f64) -> Self {
        let inner = Poly::new(vec![1.0, 0.0, -(a + 3.0), a + 2.0]);
        let outer = Poly::new(vec![-4.0 * a, 8.0 * a, -5.0 * a, a]);
        let pieces = vec![
            Piece { lo: -2.0, hi: -1.0, coeffs: outer.reflected() },
            Piece { lo: -1.0, hi: 0.0, coeffs: inner.reflected() },
            Piece { lo: 0.0, hi: 1.0, coeffs: inner },
            Piece { lo: 1.0, hi: 2.0, coeffs: outer },
        ];
        Kernel::new(format!("keys(a={a})"), pieces, true)
            .expect("Keys kernel satisfies the kernel invariants for every a")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Largest M with φ^(M) continuous, i.e. φ^(M+1) bounded.
    pub fn smoothness_m(&self) -> u32 {
        self.smoothness_m
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    /// Sorted, de-duplicated piece end points.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().flat_map(|p| [p.lo, p.hi]).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Piece polynomials of φ^(order), paired with their intervals.
    pub fn derivative_pieces(&self, order: usize) -> impl Iterator<Item = (f64, f64, &Poly)> + '_ {
        self.pieces
            .iter()
            .zip(&self.derivs)
            .map(move |(p, d)| (p.lo, p.hi, &d[order]))
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_order(t, 0)
    }

    /// φ^(order)(t); right-continuous at piece boundaries, zero off support.
    pub fn eval(&self, t: f64, derivative_order: u32) -> Result<f64> {
        if derivative_order > 3 {
            return Err(Error::UnsupportedDerivativeOrder(derivative_order));
        }
        Ok(self.eval_order(t, derivative_order as usize))
    }

    fn eval_order(&self, t: f64, order: usize) -> f64 {
        let idx = self.pieces.partition_point(|p| p.lo <= t);
        if idx == 0 {
            return 0.0;
        }
        let i = idx - 1;
        let p = &self.pieces[i];
        if t < p.hi || (t == p.hi && idx == self.pieces.len()) {
            self.derivs[i][order].eval(t)
        } else {
            0.0
        }
    }

    fn mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.coeffs.integral(p.lo, p.hi)).sum()
    }

    fn continuity_order(&self) -> u32 {
        let breaks = self.breakpoints();
        let mut order = 0u32;
        for n in 0..4usize {
            let continuous = breaks.iter().all(|&b| {
                let left = self.one_sided(b, n, true);
                let right = self.one_sided(b, n, false);
                (left - right).abs() <= 1e-10 * (1.0 + left.abs().max(right.abs()))
            });
            if !continuous {
                return if n == 0 { 0 } else { order };
            }
            order = n as u32;
        }
        order
    }

    fn one_sided(&self, x: f64, order: usize, from_left: bool) -> f64 {
        self.pieces
            .iter()
            .zip(&self.derivs)
            .find(|(p, _)| if from_left { p.hi == x } else { p.lo == x })
            .map(|(_, d)| d[order].eval(x))
            .unwrap_or(0.0)
    }

    /// Fourier transform φ̃(λ) = ∫ φ(t) e^{-iλt} dt, in closed form.
    pub fn spectrum(&self, lambda: f64) -> Complex64 {
        self.pieces
            .iter()
            .zip(&self.derivs)
            .map(|(p, d)| piece_fourier(p.lo, p.hi, &d[0], lambda))
            .sum()
    }

    pub fn to_document(&self) -> KernelDocument {
        KernelDocument {
            schema: KERNEL_SCHEMA_VERSION,
            name: self.name.clone(),
            even: self.even,
            pieces: self.pieces.clone(),
        }
    }

    pub fn from_document(doc: KernelDocument) -> Result<Self> {
        if doc.schema != KERNEL_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported kernel schema {}",
                doc.schema
            )));
        }
        Kernel::new(doc.name, doc.pieces, doc.even)
    }

    /// Stable identity used for caching derived tables.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("kernel document serializes")
    }
}

/// The standard Keys kernel, a = −1/2.
pub fn build_keys_kernel() -> Kernel {
    Kernel::keys(-0.5)
}

pub fn eval_kernel(k: &Kernel, t: f64, derivative_order: u32) -> Result<f64> {
    k.eval(t, derivative_order)
}

pub fn kernel_spectrum(k: &Kernel, lambda: f64) -> Complex64 {
    k.spectrum(lambda)
}

/// ∫_lo^hi p(t) e^{-iλt} dt.
fn piece_fourier(lo: f64, hi: f64, p: &Poly, lambda: f64) -> Complex64 {
    let reach = lo.abs().max(hi.abs());
    if lambda.abs() * reach < 0.5 {
        // Taylor expansion of the exponential; converges fast for |λt| < 1/2.
        let mut total = Complex64::new(0.0, 0.0);
        let mut factor = Complex64::new(1.0, 0.0);
        let step = Complex64::new(0.0, -lambda);
        for n in 0..40usize {
            if n > 0 {
                factor = factor * step / n as f64;
            }
            let mut shifted = vec![0.0; n];
            shifted.extend_from_slice(p.coeffs());
            let moment = Poly::new(shifted).integral(lo, hi);
            let term = factor * moment;
            total += term;
            if n > 4 && term.norm() < 1e-18 {
                break;
            }
        }
        return total;
    }
    // Repeated integration by parts:
    // ∫ p e^{-iλt} = -e^{-iλt} Σ_m p^(m)(t) / (iλ)^{m+1}
    let il = Complex64::new(0.0, lambda);
    let antiderivative = |t: f64| {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut d = p.clone();
        let mut denom = il;
        while !d.coeffs().is_empty() {
            sum += d.eval(t) / denom;
            denom *= il;
            d = d.derivative();
        }
        -Complex64::from_polar(1.0, -lambda * t) * sum
    };
    antiderivative(hi) - antiderivative(lo)
}

/// ∫ (φ′)² dt, exact from the pieces.
pub fn derivative_energy(k: &Kernel) -> f64 {
    k.derivative_pieces(1)
        .map(|(lo, hi, q)| q.mul(q).integral(lo, hi))
        .sum()
}

/// ∫ φ(t) cos(λt) dt by adaptive quadrature; independent of the closed form.
pub fn spectrum_by_quadrature(k: &Kernel, lambda: f64, tol: f64) -> Result<f64> {
    let breaks = k.breakpoints();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += quadrature::adaptive(w[0], w[1], tol, |t| k.value(t) * (lambda * t).cos())?;
    }
    Ok(total)
}
