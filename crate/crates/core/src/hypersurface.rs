//! The smoothed interface `Σ_i e^{-q_i(t, x, y, α)} = 1`.
//!
//! Here `q_i(t, x, y, α) = x·ν_i cos θ_i + y sin θ_i - c t + α τ_i`, so the
//! root `y = φ(t, x, α)` is a smooth upper envelope of the facet graphs
//! `ψ_i = (c t - α τ_i - x·ν_i cos θ_i) / sin θ_i`. All queries are in the
//! surface's own coordinates; the barriers evaluate it at `(α t, α x)`.
//!
//! The root is found for the offset `δ = y - ψ ≥ 0` with `ψ = max_i ψ_i`.
//! Writing `r_i = (ψ - ψ_i) sin θ_i ≥ 0`, the residual is
//! `F(δ) = Σ_i e^{-r_i - δ sin θ_i} - 1`, which is convex and decreasing with
//! `F(0) ≥ 0`, so Newton started at `δ = 0` increases monotonically to the
//! root. The argmax term is evaluated as `expm1` to keep `F` accurate when
//! one front dominates.
//!
//! Derivatives follow from differentiating `Σ E_i = 1` with `E_i = e^{-q̂_i}`:
//! along any direction with `a_i = ∂q_i` (at fixed `y`) and `S = Σ E_i sin θ_i`,
//! `φ' = -Σ E_i a_i / S` and `φ'' = Σ E_i (a_i + φ' sin θ_i)² / S`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::FrontConfiguration;
use crate::jet::Jet;

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 100;

#[derive(Debug, Clone)]
pub struct ScaledSurface {
    cfg: FrontConfiguration,
    alpha: f64,
    /// `sin θ_i`
    sin: Vec<f64>,
    /// `ν_i cos θ_i`, the horizontal part of `e_i`
    horiz: Vec<Vec<f64>>,
}

/// The root together with the per-front data needed for derivatives.
#[derive(Debug, Clone)]
pub struct SurfacePoint {
    pub phi: f64,
    pub psi: f64,
    /// `q̂_i = q_i(t, x, φ, α)`
    pub q_hat: Vec<f64>,
    /// `E_i = e^{-q̂_i}`
    pub weights: Vec<f64>,
    /// `Σ E_i - 1` at the returned root.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiDerivatives {
    pub phi_t: f64,
    pub grad: Vec<f64>,
    /// `∇²_x φ`, row-major `(N-1) × (N-1)`
    pub hess: Vec<Vec<f64>>,
    /// `∂_t ∇_x φ`
    pub grad_t: Vec<f64>,
    /// `∂_t²φ`, needed for `∂_t` of gradient-dependent quantities
    pub phi_tt: f64,
}

/// Jets of the surface quantities along one direction in `(t, x)`.
#[derive(Debug, Clone)]
pub struct SurfaceJets {
    pub phi: Jet,
    pub h: Jet,
    pub grad: Vec<Jet>,
}

impl ScaledSurface {
    pub fn new(cfg: FrontConfiguration, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {alpha}")));
        }
        let n = cfg.len();
        let sin = (0..n).map(|i| cfg.theta(i).sin()).collect();
        let horiz = (0..n)
            .map(|i| {
                let e = cfg.direction(i);
                e[..cfg.dim() - 1].to_vec()
            })
            .collect();
        Ok(Self { cfg, alpha, sin, horiz })
    }

    pub fn config(&self) -> &FrontConfiguration {
        &self.cfg
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    /// Number of horizontal coordinates, `N - 1`.
    pub fn horizontal_dim(&self) -> usize {
        self.cfg.dim() - 1
    }

    /// `q_i` at fixed height `y = 0`; `q_i(y) = base_i + y sin θ_i`.
    #[inline]
    fn base(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        let mut s = -self.cfg.speed() * t + self.alpha * self.cfg.tau(i);
        for (a, b) in x.iter().zip(&self.horiz[i]) {
            s += a * b;
        }
        s
    }

    pub fn psi_i(&self, i: usize, t: f64, x: &[f64]) -> f64 {
        -self.base(i, t, x) / self.sin[i]
    }

    pub fn psi(&self, t: f64, x: &[f64]) -> f64 {
        (0..self.cfg.len()).map(|i| self.psi_i(i, t, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.horizontal_dim() {
            return Err(Error::Dimension { expected: self.horizontal_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Solves for `φ(t, x, α)` and keeps the per-front data.
    pub fn solve(&self, t: f64, x: &[f64]) -> Result<SurfacePoint> {
        self.check(x)?;
        let n = self.cfg.len();
        let psi_i: Vec<f64> = (0..n).map(|i| self.psi_i(i, t, x)).collect();
        let mut k = 0;
        for i in 1..n {
            if psi_i[i] > psi_i[k] {
                k = i;
            }
        }
        let psi = psi_i[k];
        let r: Vec<f64> = (0..n).map(|i| if i == k { 0.0 } else { (psi - psi_i[i]) * self.sin[i] }).collect();
        let min_sin = self.sin.iter().copied().fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (0.0f64, (n as f64).ln() / min_sin);
        let residual = |d: f64| -> (f64, f64) {
            let mut f = (-d * self.sin[k]).exp_m1();
            let mut df = -self.sin[k] * (-d * self.sin[k]).exp();
            for i in 0..n {
                if i != k {
                    let e = (-r[i] - d * self.sin[i]).exp();
                    f += e;
                    df -= self.sin[i] * e;
                }
            }
            (f, df)
        };
        let mut d = 0.0;
        let mut f = residual(d).0;
        for _ in 0..MAX_NEWTON {
            let (fv, dfv) = residual(d);
            f = fv;
            if fv == 0.0 {
                break;
            }
            if fv > 0.0 {
                lo = lo.max(d);
            } else {
                hi = hi.min(d);
            }
            let mut next = d - fv / dfv;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - d).abs() <= 4.0 * f64::EPSILON * d.abs().max(1e-300) {
                d = next;
                f = residual(d).0;
                break;
            }
            d = next;
        }
        if !(f.abs() <= RESIDUAL_TOL) {
            return Err(Error::SurfaceSolve { t, x: x.to_vec(), residual: f });
        }
        let q_hat: Vec<f64> = (0..n).map(|i| r[i] + d * self.sin[i]).collect();
        let weights = q_hat.iter().map(|q| (-q).exp()).collect();
        Ok(SurfacePoint { phi: psi + d, psi, q_hat, weights, residual: f })
    }

    pub fn solve_phi(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.solve(t, x)?.phi)
    }

    /// `∂q_i/∂v` at fixed `y` for the direction `v = (dt, dx)`.
    #[inline]
    fn directional_base(&self, i: usize, dt: f64, dx: &[f64]) -> f64 {
        let mut s = -self.cfg.speed() * dt;
        for (a, b) in dx.iter().zip(&self.horiz[i]) {
            s += a * b;
        }
        s
    }

    /// Jets of `φ`, `h` and `∇_x φ` along `(dt, dx)` at a solved point.
    pub fn jets(&self, p: &SurfacePoint, dt: f64, dx: &[f64]) -> SurfaceJets {
        let n = self.cfg.len();
        let m = self.horizontal_dim();
        let s_sum: f64 = (0..n).map(|i| p.weights[i] * self.sin[i]).sum();
        let a: Vec<f64> = (0..n).map(|i| self.directional_base(i, dt, dx)).collect();
        let d1 = -(0..n).map(|i| p.weights[i] * a[i]).sum::<f64>() / s_sum;
        let g1: Vec<f64> = (0..n).map(|i| a[i] + d1 * self.sin[i]).collect();
        let d2 = (0..n).map(|i| p.weights[i] * g1[i] * g1[i]).sum::<f64>() / s_sum;
        let e: Vec<Jet> = (0..n)
            .map(|i| Jet::new(p.q_hat[i], g1[i], d2 * self.sin[i]).scale(-1.0).exp())
            .collect();
        let mut h = Jet::constant(0.0);
        for i in 0..n {
            for j in i + 1..n {
                h = h + (e[i] * e[j]).scale(2.0);
            }
        }
        let s_jet = (0..n).fold(Jet::constant(0.0), |acc, i| acc + e[i].scale(self.sin[i]));
        let grad = (0..m)
            .map(|k| {
                let num = (0..n).fold(Jet::constant(0.0), |acc, i| acc + e[i].scale(self.horiz[i][k]));
                -(num / s_jet)
            })
            .collect();
        SurfaceJets { phi: Jet::new(p.phi, d1, d2), h, grad }
    }

    /// `∂_t φ`, `∇_x φ` and the second derivatives by implicit differentiation.
    pub fn phi_derivatives(&self, t: f64, x: &[f64]) -> Result<PhiDerivatives> {
        let p = self.solve(t, x)?;
        Ok(self.derivatives_at(&p))
    }

    pub fn derivatives_at(&self, p: &SurfacePoint) -> PhiDerivatives {
        let n = self.cfg.len();
        let m = self.horizontal_dim();
        let c = self.cfg.speed();
        let s_sum: f64 = (0..n).map(|i| p.weights[i] * self.sin[i]).sum();
        // variable 0 is t, variables 1..=m are x
        let partial = |i: usize, v: usize| if v == 0 { -c } else { self.horiz[i][v - 1] };
        let first: Vec<f64> = (0..=m)
            .map(|v| -(0..n).map(|i| p.weights[i] * partial(i, v)).sum::<f64>() / s_sum)
            .collect();
        let g = |i: usize, v: usize| partial(i, v) + first[v] * self.sin[i];
        let second = |a: usize, b: usize| (0..n).map(|i| p.weights[i] * g(i, a) * g(i, b)).sum::<f64>() / s_sum;
        PhiDerivatives {
            phi_t: first[0],
            grad: first[1..].to_vec(),
            hess: (1..=m).map(|a| (1..=m).map(|b| second(a, b)).collect()).collect(),
            grad_t: (1..=m).map(|a| second(0, a)).collect(),
            phi_tt: second(0, 0),
        }
    }

    /// `h` in pair-sum form and as `1 - Σ E_i²`.
    pub fn flatness_h(&self, t: f64, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.solve(t, x)?;
        Ok(flatness_from(&p.weights))
    }

    /// Samples the surface on a random box and records the quantities needed
    /// to fit the constants of the derivative bounds.
    pub fn fit_constants(&self, sample: &SurfaceSample) -> Result<SurfaceFit> {
        let m = self.horizontal_dim();
        let c = self.cfg.speed();
        let n = self.cfg.len();
        let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
        let mut fit = SurfaceFit::default();
        let slope_max = self.cfg.max_slope();
        for _ in 0..sample.count {
            let t = rng.random_range(-sample.half_width..=sample.half_width);
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-sample.half_width..=sample.half_width)).collect();
            let p = self.solve(t, &x)?;
            let (h, h_alt) = flatness_from(&p.weights);
            let d = self.derivatives_at(&p);
            fit.samples += 1;
            fit.max_residual = fit.max_residual.max(p.residual.abs());
            fit.max_h_identity_gap = fit.max_h_identity_gap.max((h - h_alt).abs());
            if p.phi < p.psi {
                fit.psi_violations += 1;
            }
            let gap = p.phi - p.psi;
            if h > 0.0 {
                fit.c_hat = fit.c_hat.max(gap / h);
            } else if gap > 0.0 {
                fit.c_hat = f64::INFINITY;
            }
            // the facet whose graph is on top
            let k = (0..n).max_by(|&a, &b| self.psi_i(a, t, &x).total_cmp(&self.psi_i(b, t, &x))).unwrap_or(0);
            let nu_cot: Vec<f64> = self.horiz[k].iter().map(|v| v / self.sin[k]).collect();
            let dev = (d.phi_t - c / self.sin[k]).abs()
                + d.grad.iter().zip(&nu_cot).map(|(g, v)| (g + v) * (g + v)).sum::<f64>().sqrt();
            let norm2: f64 = d.grad.iter().map(|g| g * g).sum();
            let normal_speed = d.phi_t / (1.0 + norm2).sqrt() - c;
            if h > 1e-300 {
                fit.c1_hat = fit.c1_hat.max(dev / h).max(normal_speed / h).max(h / normal_speed.max(1e-300));
                fit.max_gradient_excess = fit.max_gradient_excess.max(norm2.sqrt() - slope_max);
                // ∂_t h / h on the surface: h_t = -Σ_{i≠j} E_i E_j (g_i + g_j) with g = ∂_t q̂
                let g: Vec<f64> = (0..n).map(|i| -c + d.phi_t * self.sin[i]).collect();
                let mut ht = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            ht -= p.weights[i] * p.weights[j] * (g[i] + g[j]);
                        }
                    }
                }
                let ratio = ht / h;
                fit.dt_h_ratio_min = fit.dt_h_ratio_min.min(ratio);
                fit.dt_h_ratio_max = fit.dt_h_ratio_max.max(ratio);
            }
        }
        fit.two_c = 2.0 * c;
        Ok(fit)
    }

    /// CSV rows `(t, x.., φ, h, |φ - ψ|)` over a regular grid of `(t, x)`.
    pub fn write_samples_csv<W: Write>(&self, mut out: W, ts: &[f64], xs: &[Vec<f64>]) -> Result<()> {
        let m = self.horizontal_dim();
        let xcols: Vec<String> = (0..m).map(|k| format!("x{k}")).collect();
        writeln!(out, "t,{},phi,h,gap", xcols.join(","))?;
        for &t in ts {
            for x in xs {
                let p = self.solve(t, x)?;
                let (h, _) = flatness_from(&p.weights);
                let xs: Vec<String> = x.iter().map(|v| format!("{v:.10e}")).collect();
                writeln!(out, "{t:.10e},{},{:.17e},{:.17e},{:.17e}", xs.join(","), p.phi, h, p.phi - p.psi)?;
            }
        }
        Ok(())
    }
}

/// `(Σ_{i≠j} E_i E_j, 1 - Σ E_i²)`.
pub fn flatness_from(weights: &[f64]) -> (f64, f64) {
    let n = weights.len();
    let mut pair = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            pair += 2.0 * weights[i] * weights[j];
        }
    }
    let ident = 1.0 - weights.iter().map(|e| e * e).sum::<f64>();
    (pair, ident)
}

/// Random sampling box for [`ScaledSurface::fit_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub count: usize,
    pub half_width: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFit {
    pub samples: usize,
    pub max_residual: f64,
    pub max_h_identity_gap: f64,
    pub psi_violations: usize,
    /// smallest `Ĉ` with `|φ - ψ| ≤ Ĉ h` on the sample
    pub c_hat: f64,
    /// smallest `Ĉ₁` for the first-derivative and normal-speed bounds
    pub c1_hat: f64,
    /// `max (|∇φ| - max_i |ν_i cot θ_i|)`, expected to be `≤ 0`
    pub max_gradient_excess: f64,
    pub dt_h_ratio_min: f64,
    pub dt_h_ratio_max: f64,
    pub two_c: f64,
}

impl Default for SurfaceFit {
    fn default() -> Self {
        Self {
            samples: 0,
            max_residual: 0.0,
            max_h_identity_gap: 0.0,
            psi_violations: 0,
            c_hat: 0.0,
            c1_hat: 0.0,
            max_gradient_excess: f64::NEG_INFINITY,
            dt_h_ratio_min: f64::INFINITY,
            dt_h_ratio_max: f64::NEG_INFINITY,
            two_c: 0.0,
        }
    }
}
