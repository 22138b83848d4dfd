//! Planar combustion fronts `U'' + c U' + f(U) = 0`, `U(-∞) = 1`, `U(+∞) = 0`.
//!
//! The speed comes from shooting in the phase plane `p(U) = -U'`, where
//! `dp/dU = c - f(U)/p`. Below the ignition level `f` vanishes and the
//! trajectory must be the line `p = cU`, so the matching condition is
//! `S(c) = p(θ; c) - cθ = 0`. `S` is strictly decreasing in `c`.
//!
//! Profiles are anchored at `U(0) = θ`. To the right of the anchor the
//! profile is exactly `θ e^{-cD}`. To the left it is tabulated as
//! `w = 1 - U` (kept directly so that values close to 1 stay accurate)
//! and continued by the linear tail `w ∝ e^{β₀ D}` beyond the table.

use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nonlinearity::CombustionNonlinearity;
use crate::ode::Dopri5;

/// Distance `1 - U` at which the shooting trajectory is seeded.
pub const SHOOTING_SEED: f64 = 1e-6;
/// Seed offset for the forward profile integration.
const PROFILE_SEED: f64 = 1e-7;
/// Left tabulation stops once `1 - U` drops below this.
const LEFT_CUTOFF: f64 = 1e-9;
/// Right tabulation continues at least until `U` drops below this.
const RIGHT_CUTOFF: f64 = 1e-7;

pub const DEFAULT_STEP: f64 = 0.005;
pub const DEFAULT_HALF_WIDTH: f64 = 40.0;

/// Positive root of `μ² + cμ + f'(1) = 0`, the decay rate of `1 - U` at `-∞`.
pub fn characteristic_root(nl: &CombustionNonlinearity, c: f64) -> f64 {
    let fp = nl.fprime_at_one();
    0.5 * (-c + (c * c - 4.0 * fp).sqrt())
}

fn shooting_solver() -> Dopri5 {
    Dopri5 {
        rtol: 1e-13,
        atol: 1e-16,
        h_init: 1e-8,
        h_max: 0.01,
        max_steps: 200_000,
    }
}

/// Integrates the phase-plane trajectory from `U = 1 - 1e-6` down to `U = θ`
/// and returns `p(θ; c)`.
///
/// Fails with [`Error::ShootingCollapse`] when `p` reaches zero first, which
/// happens when `c` exceeds the front speed.
pub fn shoot_p(nl: &CombustionNonlinearity, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c", format!("candidate speed must be positive, got {c}")));
    }
    let mu = characteristic_root(nl, c);
    let u0 = 1.0 - SHOOTING_SEED;
    let p0 = mu * SHOOTING_SEED;
    let mut collapsed_at = None;
    let end = shooting_solver().integrate(
        |u, y: &[f64; 1]| {
            if y[0] <= 0.0 {
                // keep the stage finite; the accepted step is rejected by the observer
                [c]
            } else {
                [c - nl.f(u) / y[0]]
            }
        },
        u0,
        [p0],
        nl.theta(),
        |u, y| {
            if y[0] <= 0.0 {
                collapsed_at = Some(u);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    );
    match (end, collapsed_at) {
        (_, Some(state)) => Err(Error::ShootingCollapse { speed: c, state }),
        (Ok(end), None) => Ok(end.y[0]),
        (Err(e), None) => Err(e),
    }
}

/// `S(c) = p(θ; c) - cθ`. Positive below the front speed, negative above.
pub fn shooting_function(nl: &CombustionNonlinearity, c: f64) -> Result<f64> {
    Ok(shoot_p(nl, c)? - c * nl.theta())
}

/// Sign-robust version used by the bracketing: a collapsed or stalled
/// trajectory means the candidate is too fast.
fn shooting_sign(nl: &CombustionNonlinearity, c: f64) -> f64 {
    match shooting_function(nl, c) {
        Ok(s) => s,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Bisection for the unique root of `S` on `[1e-4, c_max]`, widening the
/// upper end by doubling.
pub fn find_wave_speed(nl: &CombustionNonlinearity) -> Result<f64> {
    const C_MIN: f64 = 1e-4;
    const C_LIMIT: f64 = 1e4;
    let mut lo = C_MIN;
    if shooting_sign(nl, lo) <= 0.0 {
        return Err(Error::NoBracket { lo, hi: lo });
    }
    let mut hi = (2.0 * nl.lipschitz().sqrt()).max(0.1);
    while shooting_sign(nl, hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > C_LIMIT {
            return Err(Error::NoBracket { lo: C_MIN, hi });
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let s = shooting_sign(nl, mid);
        if s.abs() <= 1e-12 {
            break;
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * mid {
            break;
        }
    }
    Ok(mid)
}

/// Envelope constants and decay rates of a computed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRates {
    pub speed: f64,
    pub beta0: f64,
    /// Slope of a log-linear fit of `1 - U` over `D < -5`.
    pub beta0_fit: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
}

#[derive(Debug, Clone)]
pub struct WaveProfile {
    nl: CombustionNonlinearity,
    speed: f64,
    beta0: f64,
    step: f64,
    /// Index offset: node `k` of the tables sits at `D = (k + k_min) * step`.
    k_min: i64,
    /// `1 - U` at the nodes with `D < 0`, then exact values for `D >= 0`.
    w: Vec<f64>,
    /// `-U'` at the nodes.
    dw: Vec<f64>,
    /// Index of the node at `D = 0`.
    zero: usize,
    tails: TailRates,
}

impl WaveProfile {
    /// Speed by shooting, then a profile on the default grid.
    pub fn compute(nl: &CombustionNonlinearity) -> Result<Self> {
        let c = find_wave_speed(nl)?;
        build_profile(nl, c, DEFAULT_HALF_WIDTH, DEFAULT_STEP)
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }
    pub fn beta0(&self) -> f64 {
        self.beta0
    }
    pub fn theta(&self) -> f64 {
        self.nl.theta()
    }
    pub fn nonlinearity(&self) -> &CombustionNonlinearity {
        &self.nl
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn tail_rates(&self) -> TailRates {
        self.tails
    }

    /// `(D₀, 1 - U(D₀))` at the left end of the table; below `D₀` the
    /// profile is `1 - (1 - U(D₀)) e^{β₀(D - D₀)}`.
    pub fn left_anchor(&self) -> (f64, f64) {
        (self.node(0), self.w[0])
    }

    /// Sample coordinates, strictly increasing.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.w.len()).map(|k| self.node(k)).collect()
    }

    /// `U` at the sample coordinates.
    pub fn values(&self) -> Vec<f64> {
        (0..self.w.len())
            .map(|k| if k >= self.zero { self.right_tail(self.node(k)) } else { 1.0 - self.w[k] })
            .collect()
    }

    fn node(&self, k: usize) -> f64 {
        (k as i64 + self.k_min) as f64 * self.step
    }

    #[inline]
    fn right_tail(&self, d: f64) -> f64 {
        self.nl.theta() * (-self.speed * d).exp()
    }

    /// `(1 - U, -U')` for `D < 0`.
    #[inline]
    fn left_state(&self, d: f64) -> (f64, f64) {
        let d0 = self.node(0);
        if d <= d0 {
            let w = self.w[0] * (self.beta0 * (d - d0)).exp();
            return (w, self.beta0 * w);
        }
        let s = (d - d0) / self.step;
        let k = (s.floor() as usize).min(self.zero - 1);
        let h = self.step;
        let t = s - k as f64;
        let (w0, w1) = (self.w[k], self.w[k + 1]);
        let (mut m0, mut m1) = (self.dw[k], self.dw[k + 1]);
        let secant = (w1 - w0) / h;
        if secant > 0.0 {
            let (a, b) = (m0 / secant, m1 / secant);
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                m0 *= tau;
                m1 *= tau;
            }
        }
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let w = h00 * w0 + h10 * h * m0 + h01 * w1 + h11 * h * m1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let dw = (dh00 * w0 + dh01 * w1) / h + dh10 * m0 + dh11 * m1;
        (w, dw)
    }

    /// `U(D)`.
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        if d >= 0.0 {
            self.right_tail(d)
        } else {
            1.0 - self.left_state(d).0
        }
    }

    /// `1 - U(D)`, accurate where `U` is close to 1.
    #[inline]
    pub fn one_minus(&self, d: f64) -> f64 {
        if d >= 0.0 {
            1.0 - self.right_tail(d)
        } else {
            self.left_state(d).0
        }
    }

    /// `(U, U', U'')`, with `U''` taken from the ODE itself.
    #[inline]
    pub fn eval3(&self, d: f64) -> (f64, f64, f64) {
        let c = self.speed;
        if d >= 0.0 {
            let u = self.right_tail(d);
            (u, -c * u, c * c * u)
        } else {
            let (w, dw) = self.left_state(d);
            let u = 1.0 - w;
            let du = -dw;
            (u, du, -c * du - self.nl.f(u))
        }
    }

    /// `(ln U, U'/U, U''/U)`, so that powers `U^β` can be formed without
    /// cancellation.
    #[inline]
    pub fn log_eval3(&self, d: f64) -> (f64, f64, f64) {
        let c = self.speed;
        if d >= 0.0 {
            ((self.nl.theta()).ln() - c * d, -c, c * c)
        } else {
            let (w, dw) = self.left_state(d);
            let u = 1.0 - w;
            let du = -dw;
            ((-w).ln_1p(), du / u, (-c * du - self.nl.f(u)) / u)
        }
    }

    /// The coordinate where `U = u`, for `u ∈ (0, 1)`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid("u", format!("profile values lie in (0, 1), got {u}")));
        }
        let theta = self.nl.theta();
        if u <= theta {
            return Ok((theta / u).ln() / self.speed);
        }
        let target = 1.0 - u;
        let d0 = self.node(0);
        if target <= self.w[0] {
            return Ok(d0 + (target / self.w[0]).ln() / self.beta0);
        }
        // w is increasing on [d0, 0]
        let (mut lo, mut hi) = (d0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.left_state(mid).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Sup over interior nodes of `|U'' + cU' + f(U)|` with centred
    /// differences.
    pub fn ode_residual_sup(&self) -> f64 {
        let h = self.step;
        let c = self.speed;
        let n = self.w.len();
        let mut worst = 0.0f64;
        for k in 1..n - 1 {
            // the three-point stencil in terms of w = 1 - U
            let (wm, w0, wp) = if k < self.zero {
                (self.w[k - 1], self.w[k], self.w[k + 1])
            } else {
                let one = |j: usize| 1.0 - self.right_tail(self.node(j));
                (
                    if k - 1 < self.zero { self.w[k - 1] } else { one(k - 1) },
                    if k < self.zero { self.w[k] } else { one(k) },
                    one(k + 1),
                )
            };
            let upp = -(wp - 2.0 * w0 + wm) / (h * h);
            let up = -(wp - wm) / (2.0 * h);
            let r = upp + c * up + self.nl.f(1.0 - w0);
            worst = worst.max(r.abs());
        }
        worst
    }

    /// Two-column CSV `(D, U)` with the front constants in comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let t = self.tails;
        writeln!(out, "# c_f = {:.15e}", t.speed)?;
        writeln!(out, "# beta0 = {:.15e}", t.beta0)?;
        writeln!(out, "# beta0_fit = {:.15e}", t.beta0_fit)?;
        writeln!(out, "# L1 = {:.15e}, L2 = {:.15e}, L3 = {:.15e}, L4 = {:.15e}", t.l1, t.l2, t.l3, t.l4)?;
        writeln!(out, "D,U")?;
        for (d, u) in self.grid().iter().zip(self.values()) {
            writeln!(out, "{d:.10e},{u:.17e}")?;
        }
        Ok(())
    }

    fn fit_tails(&mut self) -> Result<()> {
        let c = self.speed;
        let b = self.beta0;
        let (mut l1, mut l2) = (f64::INFINITY, 0.0f64);
        let (mut l3, mut l4) = (0.0f64, f64::INFINITY);
        let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..self.w.len() {
            let d = self.node(k);
            if d > 0.0 {
                let r = self.right_tail(d) * (c * d).exp();
                l1 = l1.min(r);
                l2 = l2.max(r);
            } else if d < 0.0 {
                let w = self.w[k];
                let r = w * (-b * d).exp();
                l3 = l3.max(r);
                l4 = l4.min(r);
                if d < -5.0 {
                    let y = w.ln();
                    sx += d;
                    sy += y;
                    sxx += d * d;
                    sxy += d * y;
                    m += 1.0;
                }
            }
        }
        if m < 10.0 {
            return Err(Error::FitWindow(format!(
                "only {m} samples with D < -5 (table starts at D = {})",
                self.node(0)
            )));
        }
        let beta0_fit = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        self.tails = TailRates { speed: c, beta0: b, beta0_fit, l1, l2, l3, l4 };
        Ok(())
    }
}

/// Tabulates the profile for speed `c` on a uniform grid of spacing `step`
/// reaching at least `half_width` on both sides of the anchor.
pub fn build_profile(
    nl: &CombustionNonlinearity,
    c: f64,
    half_width: f64,
    step: f64,
) -> Result<WaveProfile> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c_f", format!("must be positive, got {c}")));
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(invalid("step", format!("must lie in (0, 1), got {step}")));
    }
    if !(half_width > 0.0) {
        return Err(invalid("half_width", format!("must be positive, got {half_width}")));
    }
    let theta = nl.theta();
    let beta0 = characteristic_root(nl, c);
    let ode = Dopri5 {
        rtol: 1e-13,
        atol: 1e-18,
        h_init: 1e-3,
        h_max: step.min(0.02),
        max_steps: 5_000_000,
    };
    let mut rhs = |_: f64, y: &[f64; 2]| [-y[1], -c * y[1] - nl.f(1.0 - y[0])];
    let seed = [PROFILE_SEED, -beta0 * PROFILE_SEED];
    let target = 1.0 - theta;

    // Forward until w crosses 1 - θ, remembering the last state before it.
    let mut before = (0.0, seed);
    let crossing = ode.integrate_from(&mut rhs, 0.0, seed, 1e6, ode.h_init, &mut |x, y: &[f64; 2]| {
        if y[0] >= target {
            ControlFlow::Break(())
        } else {
            before = (x, *y);
            ControlFlow::Continue(())
        }
    })?;
    if crossing.y[0] < target {
        return Err(Error::Integration("profile never reached the ignition level".into()));
    }
    // Newton on the crossing coordinate, re-integrating from the last state below it.
    let mut x_star = crossing.x;
    for _ in 0..8 {
        let y = ode
            .integrate_from(&mut rhs, before.0, before.1, x_star, 1e-3, &mut |_, _| ControlFlow::Continue(()))?
            .y;
        let dx = (y[0] - target) / (-y[1]);
        x_star -= dx;
        if dx.abs() < 1e-15 * x_star.abs().max(1.0) {
            break;
        }
    }

    // In anchored coordinates the seed sits at D = -x_star.
    let d_seed = -x_star;
    let d_left = (d_seed + (LEFT_CUTOFF / PROFILE_SEED).ln() / beta0).min(-half_width);
    let d_right = ((theta / RIGHT_CUTOFF).ln() / c).max(half_width);
    let k_min = (d_left / step).floor() as i64;
    let k_max = (d_right / step).ceil() as i64;
    let zero = (-k_min) as usize;
    let count = (k_max - k_min + 1) as usize;
    let mut w = Vec::with_capacity(count);
    let mut dw = Vec::with_capacity(count);

    let mut x = 0.0;
    let mut y = seed;
    let mut h = ode.h_init;
    for k in k_min..0 {
        let d = k as f64 * step;
        if d <= d_seed {
            let wk = PROFILE_SEED * (beta0 * (d - d_seed)).exp();
            w.push(wk);
            dw.push(beta0 * wk);
            continue;
        }
        let end = ode.integrate_from(&mut rhs, x, y, d + x_star, h, &mut |_, _| ControlFlow::Continue(()))?;
        x = end.x;
        y = end.y;
        h = end.h;
        w.push(y[0]);
        dw.push(-y[1]);
    }
    for k in 0..=k_max {
        let d = k as f64 * step;
        let u = theta * (-c * d).exp();
        w.push(1.0 - u);
        dw.push(c * u);
    }
    debug_assert_eq!(w.len(), count);

    let mut profile = WaveProfile {
        nl: *nl,
        speed: c,
        beta0,
        step,
        k_min,
        w,
        dw,
        zero,
        tails: TailRates { speed: c, beta0, beta0_fit: f64::NAN, l1: 0.0, l2: 0.0, l3: 0.0, l4: 0.0 },
    };
    profile.fit_tails()?;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> CombustionNonlinearity {
        CombustionNonlinearity::new(0.3, 1.0, 2.0, 0.1).unwrap()
    }

    #[test]
    fn characteristic_root_at_zero_speed() {
        let nl = reference();
        assert_close!(characteristic_root(&nl, 0.0), 0.7, 1e-15);
    }

    #[test]
    fn inert_trajectory_is_a_line_and_collapses() {
        let nl = CombustionNonlinearity::inert(0.3, 0.1).unwrap();
        // dp/dU = c with p(1 - δ) = 0: the line p = c(U - 1 + δ) is negative at θ.
        match shoot_p(&nl, 1.0) {
            Err(Error::ShootingCollapse { state, .. }) => assert!(state > 0.3 && state < 1.0),
            other => panic!("expected collapse, got {other:?}"),
        }
    }

    #[test]
    fn shooting_function_changes_sign_once() {
        let nl = reference();
        let c = find_wave_speed(&nl).unwrap();
        assert!(shooting_function(&nl, 0.5 * c).unwrap() > 0.0);
        assert!(shooting_sign(&nl, 2.0 * c) < 0.0);
        assert!(shooting_function(&nl, c).unwrap().abs() <= 1e-11);
    }

    #[test]
    fn profile_anchor_and_right_tail() {
        let nl = reference();
        let prof = WaveProfile::compute(&nl).unwrap();
        let c = prof.speed();
        assert_close!(prof.eval(0.0), 0.3, 1e-15);
        assert_close!(prof.eval(2.0), 0.3 * (-2.0 * c).exp(), 1e-16);
        // the table just left of the anchor agrees with θ
        assert_close!(prof.eval(-1e-9), 0.3, 1e-9);
        let (_, du, _) = prof.eval3(-1e-12);
        assert_close!(du, -c * 0.3, 1e-8);
    }

    #[test]
    fn profile_is_monotone_and_spans_the_range() {
        let prof = WaveProfile::compute(&reference()).unwrap();
        let v = prof.values();
        assert!(v.windows(2).all(|p| p[1] < p[0]));
        assert!(v[0] > 1.0 - 1e-6);
        assert!(*v.last().unwrap() < 1e-6);
        for k in 0..2000 {
            let d = -30.0 + 0.0173 * k as f64;
            assert!(prof.eval3(d).1 < 0.0);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let prof = WaveProfile::compute(&reference()).unwrap();
        for &u in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            let d = prof.inverse(u).unwrap();
            assert_close!(prof.eval(d), u, 1e-12);
        }
    }

    #[test]
    fn log_domain_matches_direct() {
        let prof = WaveProfile::compute(&reference()).unwrap();
        for &d in &[-20.0, -3.0, -0.5, 0.0, 4.0] {
            let (u, du, ddu) = prof.eval3(d);
            let (lu, r1, r2) = prof.log_eval3(d);
            assert_close!(lu.exp(), u, 1e-14);
            assert_close!(r1 * u, du, 1e-14);
            assert_close!(r2 * u, ddu, 1e-14);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let prof = WaveProfile::compute(&reference()).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# c_f = "));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), prof.grid().len() + 1);
    }
}
