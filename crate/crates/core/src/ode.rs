//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.

use std::ops::ControlFlow;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus embedded fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-13,
            atol: 1e-13,
            h_init: 1e-3,
            h_max: 0.05,
            max_steps: 2_000_000,
        }
    }
}

/// Integration state after a (possibly interrupted) run.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<const D: usize> {
    pub x: f64,
    pub y: [f64; D],
    /// Step size suggested for continuing the integration.
    pub h: f64,
    pub steps: usize,
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl Dopri5 {
    /// Integrates `y' = rhs(x, y)` from `x0` to `x1` (either direction). After
    /// every accepted step `observe(x, &y)` may stop the run early.
    pub fn integrate<const D: usize, F, O>(
        &self,
        mut rhs: F,
        x0: f64,
        y0: [f64; D],
        x1: f64,
        mut observe: O,
    ) -> Result<Endpoint<D>>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
        O: FnMut(f64, &[f64; D]) -> ControlFlow<()>,
    {
        self.integrate_from(&mut rhs, x0, y0, x1, self.h_init, &mut observe)
    }

    pub fn integrate_from<const D: usize, F, O>(
        &self,
        rhs: &mut F,
        x0: f64,
        y0: [f64; D],
        x1: f64,
        h_start: f64,
        observe: &mut O,
    ) -> Result<Endpoint<D>>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
        O: FnMut(f64, &[f64; D]) -> ControlFlow<()>,
    {
        let dir = if x1 >= x0 { 1.0 } else { -1.0 };
        let mut x = x0;
        let mut y = y0;
        let mut h = h_start.abs().min(self.h_max).max(1e-14) * dir;
        let mut k1 = rhs(x, &y);
        let mut steps = 0usize;
        while (x1 - x) * dir > 0.0 {
            if steps >= self.max_steps {
                return Err(Error::Integration(format!(
                    "step budget exhausted at x = {x} (target {x1})"
                )));
            }
            let mut last = false;
            if (x + h - x1) * dir >= 0.0 {
                h = x1 - x;
                last = true;
            }
            let k2 = rhs(x + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
            let k3 = rhs(x + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = rhs(x + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = rhs(
                x + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = rhs(
                x + h,
                &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y_new = axpy(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = rhs(x + h, &y_new);

            let mut err = 0.0f64;
            for i in 0..D {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h *= 0.2;
                if h.abs() < 1e-300 {
                    return Err(Error::Integration(format!("non-finite state near x = {x}")));
                }
                continue;
            }
            steps += 1;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                x = if last { x1 } else { x + h };
                y = y_new;
                k1 = k7;
                let proposal = (h * factor).abs().min(self.h_max);
                if observe(x, &y).is_break() {
                    return Ok(Endpoint { x, y, h: proposal, steps });
                }
                h = proposal * dir;
            } else {
                h *= factor.min(1.0);
                if h.abs() < 1e-14 * x.abs().max(1.0) {
                    return Err(Error::Integration(format!("step size underflow at x = {x}")));
                }
            }
        }
        Ok(Endpoint { x, y, h: h.abs(), steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let end = Dopri5::default()
            .integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 3.0, |_, _| ControlFlow::Continue(()))
            .unwrap();
        assert_close!(end.y[0], (-3.0f64).exp(), 1e-12);
    }

    #[test]
    fn harmonic_oscillator_backward() {
        let end = Dopri5::default()
            .integrate(
                |_, y: &[f64; 2]| [y[1], -y[0]],
                2.0,
                [2.0f64.sin(), 2.0f64.cos()],
                0.0,
                |_, _| ControlFlow::Continue(()),
            )
            .unwrap();
        assert_close!(end.y[0], 0.0, 1e-12);
        assert_close!(end.y[1], 1.0, 1e-12);
    }

    #[test]
    fn observer_stops_early() {
        let end = Dopri5::default()
            .integrate(
                |_, _: &[f64; 1]| [1.0],
                0.0,
                [0.0],
                10.0,
                |_, y| if y[0] > 1.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) },
            )
            .unwrap();
        assert!(end.x > 1.0 && end.x < 10.0);
    }
}
