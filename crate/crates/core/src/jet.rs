//! Truncated Taylor arithmetic in one variable.
//!
//! A [`Jet`] holds the normalized Taylor coefficients `c[k] = f^(k)(t0) / k!`
//! of a function around a fixed point. Arithmetic on jets propagates exact
//! derivatives through the protocol formulas, so every time derivative that
//! appears in a coupling is analytic rather than a finite difference.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number of stored coefficients (orders 0 through 7).
pub const JET_LEN: usize = 8;

/// Scalar type the coupling formulas are generic over.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    /// Zeroth-order value.
    fn value(self) -> f64;

    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn value(self) -> f64 {
        self
    }
}

/// Truncated Taylor series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; JET_LEN],
}

impl Jet {
    pub fn constant(x: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = x;
        Jet { c }
    }

    /// Builds a jet from plain derivatives `d[k] = f^(k)`.
    pub fn from_derivatives(d: &[f64]) -> Self {
        let mut c = [0.0; JET_LEN];
        let mut fact = 1.0;
        for (k, slot) in c.iter_mut().enumerate().take(d.len()) {
            if k > 0 {
                fact *= k as f64;
            }
            *slot = d[k] / fact;
        }
        Jet { c }
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k] * fact
    }

    /// Time derivative; the top coefficient is lost.
    pub fn deriv(&self) -> Self {
        let mut c = [0.0; JET_LEN];
        for k in 0..JET_LEN - 1 {
            c[k] = (k + 1) as f64 * self.c[k + 1];
        }
        Jet { c }
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|x| *x *= a);
        Jet { c }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut c = self.c;
        for k in 0..JET_LEN {
            c[k] += o.c[k];
        }
        Jet { c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        let mut c = self.c;
        for k in 0..JET_LEN {
            c[k] -= o.c[k];
        }
        Jet { c }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; JET_LEN];
        for k in 0..JET_LEN {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.c[j] * o.c[k - j];
            }
            c[k] = s;
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let mut q = [0.0; JET_LEN];
        for k in 0..JET_LEN {
            let mut s = self.c[k];
            for j in 0..k {
                s -= q[j] * o.c[k - j];
            }
            q[k] = s / o.c[0];
        }
        Jet { c: q }
    }
}

impl Real for Jet {
    fn cst(x: f64) -> Self {
        Jet::constant(x)
    }

    fn sqrt(self) -> Self {
        let mut s = [0.0; JET_LEN];
        s[0] = self.c[0].sqrt();
        for k in 1..JET_LEN {
            let mut acc = self.c[k];
            for j in 1..k {
                acc -= s[j] * s[k - j];
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Jet { c: s }
    }

    fn ln(self) -> Self {
        let mut l = [0.0; JET_LEN];
        l[0] = self.c[0].ln();
        for k in 1..JET_LEN {
            let mut acc = self.c[k];
            for j in 1..k {
                acc -= (j as f64 / k as f64) * l[j] * self.c[k - j];
            }
            l[k] = acc / self.c[0];
        }
        Jet { c: l }
    }

    fn value(self) -> f64 {
        self.c[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(t0: f64) -> Jet {
        Jet::from_derivatives(&[t0, 1.0])
    }

    #[test]
    fn product_and_quotient_rules() {
        let t = var(0.7);
        let f = (t * t + Jet::constant(1.0)) / (t + Jet::constant(2.0));
        // f = (t^2+1)/(t+2); f' = (t^2+4t-1)/(t+2)^2
        let t0: f64 = 0.7;
        let fp = (t0 * t0 + 4.0 * t0 - 1.0) / (t0 + 2.0).powi(2);
        assert!((f.derivative(1) - fp).abs() < 1e-14);
        // f'' = 10/(t+2)^3
        assert!((f.derivative(2) - 10.0 / (t0 + 2.0).powi(3)).abs() < 1e-13);
    }

    #[test]
    fn sqrt_and_ln_match_closed_forms() {
        let t0: f64 = 1.3;
        let t = var(t0);
        let s = t.sqrt();
        assert!((s.derivative(3) - 3.0 / 8.0 * t0.powf(-2.5)).abs() < 1e-13);
        let l = t.ln();
        // d^k/dt^k ln t = (-1)^(k-1)(k-1)!/t^k
        assert!((l.derivative(4) + 6.0 / t0.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn deriv_shifts_coefficients() {
        let t = var(0.2);
        let f = t * t * t;
        let d = f.deriv();
        assert!((d.value() - 3.0 * 0.04).abs() < 1e-15);
        assert!((d.derivative(1) - 6.0 * 0.2).abs() < 1e-15);
    }
}
