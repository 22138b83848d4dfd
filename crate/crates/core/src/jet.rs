//! Second-order Taylor jets in one direction.
//!
//! A [`Jet`] carries `(g, g', g'')` of a scalar function along a line
//! `s ↦ g(z + s d)` at `s = 0`. Pushing jets through an expression gives its
//! first and second directional derivatives exactly (up to round-off), which
//! is how the barrier residuals avoid finite-difference cancellation.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    #[inline]
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    #[inline]
    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    /// The coordinate itself: value `v`, unit first derivative.
    #[inline]
    pub const fn variable(v: f64, slope: f64) -> Self {
        Self { v, d1: slope, d2: 0.0 }
    }

    /// `g(self)` given `g`, `g'`, `g''` at `self.v`.
    #[inline]
    pub fn compose(self, g: f64, dg: f64, ddg: f64) -> Self {
        Self {
            v: g,
            d1: dg * self.d1,
            d2: dg * self.d2 + ddg * self.d1 * self.d1,
        }
    }

    #[inline]
    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    #[inline]
    pub fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.compose(self.v.ln(), r, -r * r)
    }

    #[inline]
    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.compose(s, 0.5 / s, -0.25 / (s * self.v))
    }

    #[inline]
    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.compose(r, -r * r, 2.0 * r * r * r)
    }

    #[inline]
    pub fn powf(self, p: f64) -> Self {
        let g = self.v.powf(p);
        let dg = p * self.v.powf(p - 1.0);
        let ddg = p * (p - 1.0) * self.v.powf(p - 2.0);
        self.compose(g, dg, ddg)
    }

    #[inline]
    pub fn square(self) -> Self {
        self * self
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Self::new(self.v * k, self.d1 * k, self.d2 * k)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d1, -self.d2)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, k: f64) -> Jet {
        Jet::new(self.v + k, self.d1, self.d2)
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, k: f64) -> Jet {
        Jet::new(self.v - k, self.d1, self.d2)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, k: f64) -> Jet {
        self.scale(k)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    #[inline]
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    #[inline]
    fn sub(self, j: Jet) -> Jet {
        Jet::new(self - j.v, -j.d1, -j.d2)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    #[inline]
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let x = Jet::variable(1.5, 1.0);
        let g = x * x * x / (x + 1.0);
        // g = x^3/(x+1); g' = (2x^3+3x^2)/(x+1)^2; g'' = 2x(x^2+3x+3)/(x+1)^3
        let v = 1.5f64;
        assert_close!(g.v, v.powi(3) / (v + 1.0), 1e-15);
        assert_close!(g.d1, (2.0 * v.powi(3) + 3.0 * v * v) / (v + 1.0).powi(2), 1e-14);
        assert_close!(g.d2, 2.0 * v * (v * v + 3.0 * v + 3.0) / (v + 1.0).powi(3), 1e-14);
    }

    #[test]
    fn chain_rule_through_exp_ln_sqrt() {
        let x = Jet::variable(0.7, 2.0);
        let g = (x.square() + 1.0).sqrt().ln() + (-x).exp();
        let h = 1e-4;
        let f = |s: f64| {
            let x = 0.7 + 2.0 * s;
            (x * x + 1.0f64).sqrt().ln() + (-x).exp()
        };
        assert_close!(g.d1, (f(h) - f(-h)) / (2.0 * h), 1e-7);
        assert_close!(g.d2, (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h), 1e-5);
    }

    #[test]
    fn powf_matches_repeated_product() {
        let x = Jet::variable(1.3, 0.5);
        let a = x.powf(3.0);
        let b = x * x * x;
        assert_close!(a.v, b.v, 1e-14);
        assert_close!(a.d1, b.d1, 1e-14);
        assert_close!(a.d2, b.d2, 1e-14);
    }
}
