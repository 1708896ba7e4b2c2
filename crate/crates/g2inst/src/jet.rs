//! Truncated Taylor arithmetic.
//!
//! Right-hand sides are written once against [`Scalar`] and evaluated either on
//! plain `f64` (integration) or on [`Jet`]s (series recursion, exact Jacobians).

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant carrying the same truncation as `self`.
    fn cst(&self, v: f64) -> Self;
    /// Constant term.
    fn value(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, alpha: f64) -> Self;

    fn sq(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn cst(&self, v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, alpha: f64) -> Self {
        f64::powf(*self, alpha)
    }
}

/// Truncated power series `c[0] + c[1] x + … + c[N] x^N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet { c }
    }

    /// The independent variable `x0 + x`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut j = Jet::constant(x0, order);
        if order > 0 {
            j.c[1] = 1.0;
        }
        j
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        assert!(!c.is_empty(), "a jet needs at least one coefficient");
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    /// Evaluate the polynomial `Σ p[k] x^k` on a jet argument (Horner).
    pub fn compose_poly(p: &[f64], x: &Jet) -> Jet {
        let mut acc = Jet::constant(0.0, x.order());
        for &pk in p.iter().rev() {
            acc = acc * x.clone() + pk;
        }
        acc
    }

    fn zip(&self, o: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        debug_assert_eq!(self.c.len(), o.c.len(), "jet truncation mismatch");
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| f(*a, *b)).collect() }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        self.zip(&o, |a, b| a + b)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self.zip(&o, |a, b| a - b)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let n = self.c.len();
        debug_assert_eq!(n, o.c.len(), "jet truncation mismatch");
        let mut c = vec![0.0; n];
        for (i, a) in self.c.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in o.c[..n - i].iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let n = self.c.len();
        debug_assert_eq!(n, o.c.len(), "jet truncation mismatch");
        let b0 = o.c[0];
        let mut q = vec![0.0; n];
        for k in 0..n {
            let mut s = self.c[k];
            for j in 1..=k {
                s -= o.c[j] * q[k - j];
            }
            q[k] = s / b0;
        }
        Jet { c: q }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { c: self.c.into_iter().map(|v| -v).collect() }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, v: f64) -> Jet {
        self.c[0] += v;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, v: f64) -> Jet {
        self.c[0] -= v;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, v: f64) -> Jet {
        Jet { c: self.c.into_iter().map(|x| x * v).collect() }
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, v: f64) -> Jet {
        Jet { c: self.c.into_iter().map(|x| x / v).collect() }
    }
}

impl Scalar for Jet {
    fn cst(&self, v: f64) -> Self {
        Jet::constant(v, self.order())
    }

    fn value(&self) -> f64 {
        self.c[0]
    }

    fn sqrt(&self) -> Self {
        let n = self.c.len();
        let mut s = vec![0.0; n];
        s[0] = self.c[0].sqrt();
        for k in 1..n {
            let mut acc = self.c[k];
            for j in 1..k {
                acc -= s[j] * s[k - j];
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Jet { c: s }
    }

    fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return self.cst(1.0) / self.powi(-n);
        }
        let mut result = self.cst(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        result
    }

    // J.C.P. Miller recurrence for p = a^α.
    fn powf(&self, alpha: f64) -> Self {
        let n = self.c.len();
        let a0 = self.c[0];
        let mut p = vec![0.0; n];
        p[0] = a0.powf(alpha);
        for k in 1..n {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += (alpha * j as f64 - (k - j) as f64) * self.c[j] * p[k - j];
            }
            p[k] = acc / (k as f64 * a0);
        }
        Jet { c: p }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_roundtrip() {
        let x = Jet::variable(0.3, 6);
        let y = x.clone() * x.clone() + 1.0;
        let back = (y.clone() / x.clone()) * x;
        for k in 0..=6 {
            assert!((back.coeff(k) - y.coeff(k)).abs() < 1e-12, "{k}: {} vs {}", back.coeff(k), y.coeff(k));
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let x = Jet::variable(2.0, 8) * 3.0 + 1.0;
        let r = x.sqrt();
        let sq = r.clone() * r;
        for k in 0..=8 {
            assert!((sq.coeff(k) - x.coeff(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn binomial_series_from_powf() {
        // (1 + x)^(-1/2): coefficients C(-1/2, k)
        let x = Jet::variable(0.0, 5) + 1.0;
        let p = x.powf(-0.5);
        let expect = [1.0, -0.5, 0.375, -0.3125, 0.2734375, -0.24609375];
        for (k, e) in expect.iter().enumerate() {
            assert!((p.coeff(k) - e).abs() < 1e-15);
        }
    }
}
