//! Dense univariate polynomials in the monomial basis, with just enough
//! algebra for piecewise-polynomial kernels.

use serde::{Deserialize, Serialize};

/// Coefficients in ascending order: `c[0] + c[1] t + c[2] t^2 + ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly(coeffs)
    }

    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, &c)| n as f64 * c)
                .collect(),
        )
    }

    pub fn nth_derivative(&self, order: usize) -> Poly {
        (0..order).fold(self.clone(), |p, _| p.derivative())
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Poly {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        out.push(0.0);
        out.extend(
            self.0
                .iter()
                .enumerate()
                .map(|(n, &c)| c / (n as f64 + 1.0)),
        );
        Poly(out)
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = self.antiderivative();
        anti.eval(b) - anti.eval(a)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Returns q with q(t) = p(t + shift).
    pub fn shifted(&self, shift: f64) -> Poly {
        // Horner in polynomial arithmetic: p(t + s) = (...(c_n (t+s) + c_{n-1})(t+s) ...)
        let mut out: Vec<f64> = Vec::new();
        for &c in self.0.iter().rev() {
            let mut next = vec![0.0; out.len() + 1];
            for (i, &o) in out.iter().enumerate() {
                next[i + 1] += o;
                next[i] += o * shift;
            }
            next[0] += c;
            out = next;
        }
        Poly(out)
    }

    /// Returns q with q(t) = p(-t).
    pub fn reflected(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .map(|(n, &c)| if n % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    /// Synthetic division by `(s - root)`: returns `(quotient, remainder)` with
    /// `p(s) = (s - root) * quotient(s) + remainder`.
    pub fn divide_linear(&self, root: f64) -> (Poly, f64) {
        if self.0.is_empty() {
            return (Poly::zero(), 0.0);
        }
        let n = self.0.len();
        let mut quotient = vec![0.0; n - 1];
        let mut carry = 0.0;
        for i in (0..n).rev() {
            let value = self.0[i] + carry * root;
            if i == 0 {
                return (Poly(quotient), value);
            }
            quotient[i - 1] = value;
            carry = value;
        }
        unreachable!()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_and_calculus() {
        let p = Poly::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 6.0]);
        assert!((p.integral(0.0, 1.0) - (1.0 - 1.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn shift_and_reflect_agree_with_pointwise_eval() {
        let p = Poly::new(vec![0.5, 1.0, -2.5, 1.5]);
        let q = p.shifted(0.75);
        let r = p.reflected();
        for &t in &[-1.3, 0.0, 0.4, 2.2] {
            assert!((q.eval(t) - p.eval(t + 0.75)).abs() < 1e-12);
            assert!((r.eval(t) - p.eval(-t)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_division_reconstructs() {
        let p = Poly::new(vec![2.0, -4.0, 2.5, -0.5]);
        let (q, rem) = p.divide_linear(1.7);
        assert!((rem - p.eval(1.7)).abs() < 1e-12);
        for &s in &[-2.0, 0.3, 3.1] {
            assert!(((s - 1.7) * q.eval(s) + rem - p.eval(s)).abs() < 1e-12);
        }
    }
}
