//! Combustion source terms.
//!
//! The family used throughout is
//!
//! ```text
//! f(u) = a (u - θ)^p (1 - u)   for u in (θ, 1 + σ]
//! f(u) = 0                     for u in [-σ, θ]
//! ```
//!
//! which vanishes identically below the ignition threshold, is positive on
//! `(θ, 1)`, and has `f'(1) = -a (1 - θ)^p < 0`. With `p >= 2` both `f` and
//! `f'` are continuous across `θ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The four scalars that define a member of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityParams {
    pub theta: f64,
    pub amplitude: f64,
    pub exponent: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombustionNonlinearity {
    theta: f64,
    amplitude: f64,
    exponent: f64,
    sigma: f64,
    /// `Some(k)` when the exponent is an integer, so the hot path can use `powi`.
    int_exponent: Option<i32>,
    fprime_at_one: f64,
    gamma_star: f64,
    lipschitz: f64,
}

const GAMMA_TOL: f64 = 1e-10;
const GAMMA_SAMPLES: usize = 4001;

impl CombustionNonlinearity {
    /// Validated constructor.
    pub fn new(theta: f64, amplitude: f64, exponent: f64, sigma: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid("theta", format!("must lie in (0, 1), got {theta}")));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(invalid("amplitude", format!("must be positive, got {amplitude}")));
        }
        if !(exponent >= 2.0 && exponent.is_finite()) {
            return Err(invalid("exponent", format!("must be >= 2, got {exponent}")));
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(invalid("sigma", format!("must lie in (0, 1), got {sigma}")));
        }
        Ok(Self::build(theta, amplitude, exponent, sigma))
    }

    /// The degenerate member `a = 0` (no reaction at all). Only useful as a
    /// test fixture: it has no travelling front.
    pub fn inert(theta: f64, sigma: f64) -> Result<Self> {
        let mut nl = Self::new(theta, 1.0, 2.0, sigma)?;
        nl.amplitude = 0.0;
        nl.fprime_at_one = 0.0;
        nl.lipschitz = 0.0;
        nl.gamma_star = gamma_bound(theta, sigma);
        Ok(nl)
    }

    pub fn from_params(p: &NonlinearityParams) -> Result<Self> {
        Self::new(p.theta, p.amplitude, p.exponent, p.sigma)
    }

    pub fn params(&self) -> NonlinearityParams {
        NonlinearityParams {
            theta: self.theta,
            amplitude: self.amplitude,
            exponent: self.exponent,
            sigma: self.sigma,
        }
    }

    /// Same shape with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.theta, self.amplitude * factor, self.exponent, self.sigma)
    }

    fn build(theta: f64, amplitude: f64, exponent: f64, sigma: f64) -> Self {
        let int_exponent = (exponent.fract() == 0.0 && exponent <= 64.0).then_some(exponent as i32);
        let mut nl = Self {
            theta,
            amplitude,
            exponent,
            sigma,
            int_exponent,
            fprime_at_one: -amplitude * (1.0 - theta).powf(exponent),
            gamma_star: 0.0,
            lipschitz: 0.0,
        };
        nl.gamma_star = nl.compute_gamma_star();
        nl.lipschitz = (0..=2000)
            .map(|k| nl.fprime(k as f64 / 2000.0).abs())
            .fold(0.0, f64::max);
        nl
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
    pub fn exponent(&self) -> f64 {
        self.exponent
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    /// Hölder exponent of `f'`, `min(1, p - 1)`.
    pub fn holder_exponent(&self) -> f64 {
        (self.exponent - 1.0).min(1.0)
    }
    pub fn fprime_at_one(&self) -> f64 {
        self.fprime_at_one
    }
    pub fn gamma_star(&self) -> f64 {
        self.gamma_star
    }
    /// `sup |f'|` over `[0, 1]`, sampled.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    fn pow(&self, s: f64) -> f64 {
        match self.int_exponent {
            Some(2) => s * s,
            Some(k) => s.powi(k),
            None => s.powf(self.exponent),
        }
    }

    #[inline]
    fn clamp(&self, u: f64) -> f64 {
        u.clamp(-self.sigma, 1.0 + self.sigma)
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        let u = self.clamp(u);
        if u <= self.theta {
            return 0.0;
        }
        self.amplitude * self.pow(u - self.theta) * (1.0 - u)
    }

    #[inline]
    pub fn fprime(&self, u: f64) -> f64 {
        let u = self.clamp(u);
        if u <= self.theta {
            return 0.0;
        }
        let s = u - self.theta;
        let sp1 = match self.int_exponent {
            Some(k) => s.powi(k - 1),
            None => s.powf(self.exponent - 1.0),
        };
        self.amplitude * sp1 * (self.exponent * (1.0 - u) - s)
    }

    /// `(f(u), f'(u))`, clamping `u` into `[-σ, 1 + σ]`.
    pub fn eval_f_fprime(&self, u: f64) -> (f64, f64) {
        (self.f(u), self.fprime(u))
    }

    fn sandwich_holds(&self, gamma: f64) -> bool {
        let lo = 1.5 * self.fprime_at_one;
        let hi = 0.5 * self.fprime_at_one;
        let a = 1.0 - 2.0 * gamma;
        let width = 4.0 * gamma;
        (0..GAMMA_SAMPLES).all(|k| {
            let u = a + width * k as f64 / (GAMMA_SAMPLES - 1) as f64;
            let d = self.fprime(u);
            lo <= d && d <= hi
        })
    }

    fn compute_gamma_star(&self) -> f64 {
        let bound = gamma_bound(self.theta, self.sigma);
        if self.sandwich_holds(bound) {
            return bound;
        }
        // f' is continuous with f'(1) < 0, so the sandwich holds on a small enough interval.
        let (mut lo, mut hi) = (0.0, bound);
        while hi - lo > GAMMA_TOL {
            let mid = 0.5 * (lo + hi);
            if self.sandwich_holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

fn gamma_bound(theta: f64, sigma: f64) -> f64 {
    (theta / 4.0).min((1.0 - theta) / 2.0).min(sigma / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> CombustionNonlinearity {
        CombustionNonlinearity::new(0.3, 1.0, 2.0, 0.1).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let nl = reference();
        assert_eq!(nl.f(0.3), 0.0);
        assert_eq!(nl.f(1.0), 0.0);
        assert_close!(nl.fprime_at_one(), -0.49, 1e-15);
        assert_eq!(nl.eval_f_fprime(0.1), (0.0, 0.0));
        assert_close!(nl.f(0.65), 0.042875, 1e-15);
        // 2a(u-θ)(1-u) - a(u-θ)^2 at u = 0.95
        assert_close!(nl.fprime(0.95), -0.3575, 1e-14);
    }

    #[test]
    fn gamma_star_reference_family() {
        let nl = reference();
        assert_close!(nl.gamma_star(), 0.025, 1e-15);
        // dense re-check of the sandwich on [0.95, 1.05]
        for k in 0..=10_000 {
            let u = 0.95 + 0.1 * k as f64 / 10_000.0;
            let d = nl.fprime(u);
            assert!(d >= 1.5 * nl.fprime_at_one() && d <= 0.5 * nl.fprime_at_one());
        }
    }

    #[test]
    fn gamma_star_bisects_when_bound_fails() {
        // Large sigma and theta push the min-bound up to where f' leaves the sandwich.
        let nl = CombustionNonlinearity::new(0.8, 1.0, 2.0, 0.9).unwrap();
        let bound = gamma_bound(0.8, 0.9);
        assert!(nl.gamma_star() < bound);
        assert!(nl.gamma_star() > 0.0);
        assert!(nl.sandwich_holds(nl.gamma_star()));
        assert!(!nl.sandwich_holds(nl.gamma_star() + 1e-8));
        assert!(nl.fprime(1.0 - 2.0 * nl.gamma_star()) >= 1.5 * nl.fprime_at_one() - 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CombustionNonlinearity::new(0.0, 1.0, 2.0, 0.1).is_err());
        assert!(CombustionNonlinearity::new(1.0, 1.0, 2.0, 0.1).is_err());
        assert!(CombustionNonlinearity::new(0.3, 0.0, 2.0, 0.1).is_err());
        assert!(CombustionNonlinearity::new(0.3, 1.0, 1.5, 0.1).is_err());
        assert!(CombustionNonlinearity::new(0.3, 1.0, 2.0, 1.0).is_err());
        assert!(CombustionNonlinearity::new(f64::NAN, 1.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn clamps_outside_domain() {
        let nl = reference();
        assert_eq!(nl.f(5.0), nl.f(1.1));
        assert_eq!(nl.f(-3.0), 0.0);
    }

    #[test]
    fn non_integer_exponent_matches_powf() {
        let nl = CombustionNonlinearity::new(0.25, 2.0, 2.5, 0.2).unwrap();
        let u: f64 = 0.6;
        assert_close!(nl.f(u), 2.0 * (u - 0.25).powf(2.5) * (1.0 - u), 1e-15);
        assert_close!(nl.holder_exponent(), 1.0, 0.0);
    }
}
