//! Number types the transform formulas are evaluated over.
//!
//! The kernel formulas are written once, generically, and evaluated either at
//! a complex transform argument or with a forward-mode [`Dual`] number to get
//! exact first derivatives in `s`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_real(x: f64) -> Self;
    fn exp(self) -> Self;
    /// Modulus of the value part.
    fn magnitude(self) -> f64;

    fn zero() -> Self {
        Self::from_real(0.0)
    }

    fn one() -> Self {
        Self::from_real(1.0)
    }

    fn scale(self, k: f64) -> Self {
        self * Self::from_real(k)
    }

    /// `(e^w - 1) / w`, accurate near `w = 0`.
    fn exprel(self) -> Self {
        if self.magnitude() < 1e-3 {
            // five terms leave a truncation error below 1e-18 for |w| < 1e-3
            let w = self;
            let mut term = Self::one();
            let mut sum = Self::one();
            for n in 2..=6 {
                term = term * w.scale(1.0 / n as f64);
                sum = sum + term;
            }
            sum
        } else {
            (self.exp() - Self::one()) / self
        }
    }

    fn powi(self, n: usize) -> Self {
        let mut acc = Self::one();
        let mut base = self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_real(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Real dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub const fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }

    /// The independent variable at `x`.
    pub const fn variable(x: f64) -> Self {
        Dual { re: x, eps: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        Dual::new(self.re * inv, (self.eps * o.re - self.re * o.eps) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

impl Scalar for Dual {
    fn from_real(x: f64) -> Self {
        Dual::new(x, 0.0)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    fn magnitude(self) -> f64 {
        self.re.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_derivative_of_exp_product() {
        // d/ds [e^{-2s} / (1 + s)] at s = 0.5
        let s = Dual::variable(0.5);
        let f = (s.scale(-2.0)).exp() / (Dual::one() + s);
        let expect = |x: f64| (-2.0 * x).exp() / (1.0 + x);
        let h = 1e-6;
        let fd = (expect(0.5 + h) - expect(0.5 - h)) / (2.0 * h);
        assert!((f.re - expect(0.5)).abs() < 1e-15);
        assert!((f.eps - fd).abs() < 1e-8);
    }

    #[test]
    fn exprel_is_continuous_across_branch() {
        for &w in &[1e-3 * 0.999, 1e-3 * 1.001, -1e-3 * 0.999, -1e-3 * 1.001] {
            let direct = (f64::exp(w) - 1.0) / w;
            assert!((Scalar::exprel(w) - direct).abs() < 1e-12);
        }
        assert!((Scalar::exprel(0.0_f64) - 1.0).abs() < 1e-16);
        let z = Complex64::new(1e-5, -2e-5);
        let direct = (z.exp() - 1.0) / z;
        assert!((z.exprel() - direct).norm() < 1e-10);
    }

    #[test]
    fn powi_matches_repeated_multiplication() {
        let z = Complex64::new(0.3, 0.4);
        let mut acc = Complex64::new(1.0, 0.0);
        for n in 0..12 {
            assert!((z.powi(n) - acc).norm() < 1e-15);
            acc *= z;
        }
    }
}
