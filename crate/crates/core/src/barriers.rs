//! Explicit barriers around the curved front.
//!
//! The upper barrier is
//!
//! ```text
//! V̄(t, x, y) = min{ U(ξ) + ε h(αt, αx, α) [U^β(η) ω(η) + 1 - ω(η)], 1 }
//! η = y - φ(αt, αx, α)/α,   ξ = η / sqrt(1 + |∇φ(αt, αx, α)|²)
//! ```
//!
//! and the time-shifted barrier used for stability is
//!
//! ```text
//! W⁺_δ(t, ·) = min{ V̄(ϖ(t), ·) + δ e^{-λt} [U^β(η(ϖ, ·)) ω(η) + 1 - ω(η)], 1 }
//! ϖ(t) = t - ϱδ e^{-λt} + ϱδ.
//! ```
//!
//! Parameter choices are certified numerically: the residual
//! `L V = ∂_t V - ΔV - f(V)` is sampled where the barrier is below 1 and
//! must stay above `-1e-8`. Derivatives are exact second-order jets along
//! `t` and along each spatial axis, so the certificate is limited by
//! round-off instead of a finite-difference step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::FrontConfiguration;
use crate::hypersurface::{ScaledSurface, SurfaceFit, SurfacePoint, SurfaceSample};
use crate::jet::Jet;
use crate::nonlinearity::CombustionNonlinearity;
use crate::wave_profile::WaveProfile;

/// Residuals above this count as nonnegative.
pub const RESIDUAL_TOL: f64 = -1e-8;
/// Allowed round-off when comparing `V̄` with `V̲`.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub lambda: f64,
    pub varrho: f64,
}

impl BarrierParams {
    /// Checks the structural constraints that do not depend on fitted
    /// constants: positivity, `ε ≤ γ⋆/6`, `δ ≤ γ⋆/8` and
    /// `λ < min{-f'(1)/4, β c²/16}`.
    pub fn check(&self, nl: &CombustionNonlinearity, speed: f64) -> Result<()> {
        let named = [
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("lambda", self.lambda),
            ("varrho", self.varrho),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        let g = nl.gamma_star();
        if self.epsilon > g / 6.0 {
            return Err(invalid("epsilon", format!("{} exceeds γ⋆/6 = {}", self.epsilon, g / 6.0)));
        }
        if self.delta > g / 8.0 {
            return Err(invalid("delta", format!("{} exceeds γ⋆/8 = {}", self.delta, g / 8.0)));
        }
        let lam_max = lambda_bound(nl, speed, self.beta);
        if self.lambda >= lam_max {
            return Err(invalid("lambda", format!("{} is not below {lam_max}", self.lambda)));
        }
        Ok(())
    }
}

/// `min{-f'(1)/4, β c²/16}`.
pub fn lambda_bound(nl: &CombustionNonlinearity, speed: f64, beta: f64) -> f64 {
    (-nl.fprime_at_one() / 4.0).min(beta * speed * speed / 16.0)
}

/// `(β₁*, β₂*)` for a fitted derivative constant `c1` and `max |ν cot θ|`.
pub fn beta_star(c1: f64, slope: f64) -> (f64, f64) {
    let k = (c1 + slope).powi(2) + 1.0;
    (1.0 / (4.0 * k), 1.0 / (4.0 * k.sqrt()))
}

/// Smooth switch `ω` with `(ω, ω', ω'')`: zero for `s ≤ -1`, one for
/// `s ≥ 1`, built from `ρ(r) = e^{-1/r}`.
pub fn mollifier_omega(s: f64) -> (f64, f64, f64) {
    let j = omega_jet(Jet::variable(s, 1.0));
    (j.v, j.d1, j.d2)
}

fn omega_jet(s: Jet) -> Jet {
    if s.v <= -1.0 {
        return Jet::constant(0.0);
    }
    if s.v >= 1.0 {
        return Jet::constant(1.0);
    }
    // ρ(a)/(ρ(a) + ρ(b)) is the logistic function of 4s/(1 - s²)
    let k = s.scale(4.0) / (1.0 - s.square());
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let (p, q) = (sig(k.v), sig(-k.v));
    k.compose(p, p * q, p * q * (q - p))
}

/// Which barrier a residual refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    Upper,
    TimeShifted,
}

/// Per-column data of the smoothed surface at `(αt, αx)`.
#[derive(Debug, Clone)]
pub struct Column {
    /// `φ(αt, αx, α)/α`
    pub height: f64,
    /// `sqrt(1 + |∇φ|²)`
    pub stretch: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct Barriers {
    nl: CombustionNonlinearity,
    profile: WaveProfile,
    surface: ScaledSurface,
    params: BarrierParams,
}

impl Barriers {
    pub fn new(cfg: &FrontConfiguration, profile: &WaveProfile, params: BarrierParams) -> Result<Self> {
        let surface = ScaledSurface::new(cfg.clone(), params.alpha)?;
        Ok(Self { nl: *profile.nonlinearity(), profile: profile.clone(), surface, params })
    }

    pub fn params(&self) -> &BarrierParams {
        &self.params
    }
    pub fn config(&self) -> &FrontConfiguration {
        self.surface.config()
    }
    pub fn surface(&self) -> &ScaledSurface {
        &self.surface
    }
    pub fn profile(&self) -> &WaveProfile {
        &self.profile
    }

    fn split<'a>(&self, z: &'a [f64]) -> (&'a [f64], f64) {
        let n = z.len();
        (&z[..n - 1], z[n - 1])
    }

    /// `ϖ(t)`.
    pub fn varpi(&self, t: f64) -> f64 {
        let p = &self.params;
        t - p.varrho * p.delta * (-p.lambda * t).exp() + p.varrho * p.delta
    }

    pub fn column(&self, t: f64, x: &[f64]) -> Result<Column> {
        let a = self.params.alpha;
        let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
        let p = self.surface.solve(a * t, &xs)?;
        let d = self.surface.derivatives_at(&p);
        let (h, _) = crate::hypersurface::flatness_from(&p.weights);
        let g2: f64 = d.grad.iter().map(|g| g * g).sum();
        Ok(Column { height: p.phi / a, stretch: (1.0 + g2).sqrt(), h })
    }

    /// `(ξ, η)` at `(t, z)`, `z = (x, y)`.
    pub fn xi_eta(&self, t: f64, z: &[f64]) -> Result<(f64, f64)> {
        let (x, y) = self.split(z);
        let c = self.column(t, x)?;
        let eta = y - c.height;
        Ok((eta / c.stretch, eta))
    }

    /// `U^β(η) ω(η) + 1 - ω(η)`
    fn tail_weight(&self, eta: f64) -> f64 {
        let (lu, _, _) = self.profile.log_eval3(eta);
        let (w, _, _) = mollifier_omega(eta);
        (self.params.beta * lu).exp() * w + (1.0 - w)
    }

    /// Unclamped `U(ξ) + ε h [..]` on a column.
    pub fn upper_unclamped_on(&self, col: &Column, y: f64) -> f64 {
        let eta = y - col.height;
        self.profile.eval(eta / col.stretch) + self.params.epsilon * col.h * self.tail_weight(eta)
    }

    pub fn upper_on(&self, col: &Column, y: f64) -> f64 {
        self.upper_unclamped_on(col, y).min(1.0)
    }

    /// `V̄(t, z)`.
    pub fn supersolution_upper(&self, t: f64, z: &[f64]) -> Result<f64> {
        let (x, y) = self.split(z);
        Ok(self.upper_on(&self.column(t, x)?, y))
    }

    /// `W⁺_δ(t, z)` for `t ≥ 0`.
    pub fn time_supersolution(&self, t: f64, z: &[f64]) -> Result<f64> {
        let (x, y) = self.split(z);
        let col = self.column(self.varpi(t), x)?;
        Ok(self.time_on(&col, t, y))
    }

    /// `W⁺_δ` on a column already evaluated at `ϖ(t)`.
    pub fn time_on(&self, col_at_varpi: &Column, t: f64, y: f64) -> f64 {
        let eta = y - col_at_varpi.height;
        let p = &self.params;
        (self.upper_unclamped_on(col_at_varpi, y) + p.delta * (-p.lambda * t).exp() * self.tail_weight(eta)).min(1.0)
    }

    /// Jets of `(U(ξ) + ε h B(η), B(η))` along `(dt, dx, dy)` at a solved
    /// surface point (in scaled coordinates).
    fn upper_jets(&self, p: &SurfacePoint, y: f64, dt: f64, dx: &[f64], dy: f64) -> (Jet, Jet) {
        let a = self.params.alpha;
        let sdx: Vec<f64> = dx.iter().map(|v| v * a).collect();
        let sj = self.surface.jets(p, a * dt, &sdx);
        let height = sj.phi.scale(1.0 / a);
        let eta = Jet::variable(y, dy) - height;
        let g2 = sj.grad.iter().fold(Jet::constant(0.0), |acc, g| acc + g.square());
        let xi = eta / (g2 + 1.0).sqrt();
        let (u, du, ddu) = self.profile.eval3(xi.v);
        let u_xi = xi.compose(u, du, ddu);
        let beta = self.params.beta;
        let (lu, r1, r2) = self.profile.log_eval3(eta.v);
        let ub = (beta * lu).exp();
        let ub_jet = eta.compose(ub, beta * ub * r1, beta * ub * (r2 + (beta - 1.0) * r1 * r1));
        let w = omega_jet(eta);
        let bracket = ub_jet * w + (1.0 - w);
        (u_xi + (sj.h * bracket).scale(self.params.epsilon), bracket)
    }

    /// `L V̄` at `(t, z)`, or `None` where the barrier is clamped to 1.
    pub fn upper_residual(&self, t: f64, z: &[f64]) -> Result<Option<Residual>> {
        self.residual(BarrierKind::Upper, t, z)
    }

    /// `L W⁺_δ` at `(t, z)` with `t ≥ 0`, or `None` where clamped.
    pub fn time_residual(&self, t: f64, z: &[f64]) -> Result<Option<Residual>> {
        self.residual(BarrierKind::TimeShifted, t, z)
    }

    pub fn residual(&self, kind: BarrierKind, t: f64, z: &[f64]) -> Result<Option<Residual>> {
        let (x, y) = self.split(z);
        let m = x.len();
        let a = self.params.alpha;
        let (t_eval, t_rate, amp) = match kind {
            BarrierKind::Upper => (t, 1.0, None),
            BarrierKind::TimeShifted => {
                let p = &self.params;
                let e = (-p.lambda * t).exp();
                (self.varpi(t), 1.0 + p.varrho * p.delta * p.lambda * e, Some(Jet::new(p.delta * e, -p.lambda * p.delta * e, 0.0)))
            }
        };
        let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
        let sp = self.surface.solve(a * t_eval, &xs)?;
        let zero = vec![0.0; m];
        let combine = |(v, b): (Jet, Jet), amp_j: Option<Jet>| match amp_j {
            None => v,
            Some(k) => v + k * b,
        };
        // time direction
        let jt = combine(self.upper_jets(&sp, y, t_rate, &zero, 0.0), amp);
        if jt.v >= 1.0 {
            return Ok(None);
        }
        let amp_space = amp.map(|k| Jet::constant(k.v));
        let mut lap = 0.0;
        for k in 0..m {
            let mut dir = zero.clone();
            dir[k] = 1.0;
            lap += combine(self.upper_jets(&sp, y, 0.0, &dir, 0.0), amp_space).d2;
        }
        lap += combine(self.upper_jets(&sp, y, 0.0, &zero, 1.0), amp_space).d2;
        let eta = y - sp.phi / a;
        Ok(Some(Residual { value: jt.v, residual: jt.d1 - lap - self.nl.f(jt.v), eta }))
    }

    /// Finite-difference version of [`Barriers::residual`] with step `h`,
    /// used to cross-check the jets.
    pub fn residual_fd(&self, kind: BarrierKind, t: f64, z: &[f64], h: f64) -> Result<f64> {
        let value = |t: f64, z: &[f64]| -> Result<f64> {
            match kind {
                BarrierKind::Upper => {
                    let (x, y) = self.split(z);
                    Ok(self.upper_unclamped_on(&self.column(t, x)?, y))
                }
                BarrierKind::TimeShifted => {
                    let (x, y) = self.split(z);
                    let col = self.column(self.varpi(t), x)?;
                    let eta = y - col.height;
                    let p = &self.params;
                    Ok(self.upper_unclamped_on(&col, y) + p.delta * (-p.lambda * t).exp() * self.tail_weight(eta))
                }
            }
        };
        let v0 = value(t, z)?;
        let dt = (value(t + h, z)? - value(t - h, z)?) / (2.0 * h);
        let mut lap = 0.0;
        let mut zz = z.to_vec();
        for k in 0..z.len() {
            zz[k] = z[k] + h;
            let p = value(t, &zz)?;
            zz[k] = z[k] - h;
            let mnus = value(t, &zz)?;
            zz[k] = z[k];
            lap += (p - 2.0 * v0 + mnus) / (h * h);
        }
        Ok(dt - lap - self.nl.f(v0))
    }

    /// Samples the residual of `kind` and assembles a report. `lower` is the
    /// planar mixture used for the ordering check.
    pub fn validate(&self, kind: BarrierKind, spec: &SampleSpec) -> Result<ValidationReport> {
        let cfg = self.config();
        let m = cfg.dim() - 1;
        let a = self.params.alpha;
        let chunk = 1024usize;
        let chunks = spec.count.div_ceil(chunk);
        let results: Vec<Result<Vec<Sample>>> = (0..chunks)
            .into_par_iter()
            .map(|ci| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(ci as u64 + 1)));
                let lo = ci * chunk;
                let hi = (lo + chunk).min(spec.count);
                let mut out = Vec::with_capacity(hi - lo);
                for idx in lo..hi {
                    let k = spec.half_width;
                    let t_scaled = match kind {
                        BarrierKind::Upper => rng.random_range(-k..=k),
                        BarrierKind::TimeShifted => k * rng.random::<f64>().powi(2),
                    };
                    let x_scaled: Vec<f64> = (0..m).map(|_| rng.random_range(-k..=k)).collect();
                    let t = t_scaled / a;
                    let x: Vec<f64> = x_scaled.iter().map(|v| v / a).collect();
                    let stratum = idx % 3;
                    let eta = match stratum {
                        0 => 1.0 + spec.eta_ahead * rng.random::<f64>(),
                        1 => -1.0 - spec.eta_behind * rng.random::<f64>(),
                        _ => rng.random_range(-1.0..=1.0),
                    };
                    let t_col = if kind == BarrierKind::TimeShifted { self.varpi(t) } else { t };
                    let col = self.column(t_col, &x)?;
                    let y = col.height + eta;
                    let mut z = x.clone();
                    z.push(y);
                    let res = self.residual(kind, t, &z)?;
                    let upper = match kind {
                        BarrierKind::Upper => self.upper_on(&col, y),
                        BarrierKind::TimeShifted => self.time_on(&col, t, y),
                    };
                    let lower = cfg.subsolution_lower(&self.profile, t, &z);
                    out.push(Sample { t, z, eta, residual: res.map(|r| r.residual), upper, lower });
                }
                Ok(out)
            })
            .collect();
        let mut samples = Vec::with_capacity(spec.count);
        for r in results {
            samples.extend(r?);
        }
        Ok(self.summarize(kind, spec, &samples))
    }

    fn summarize(&self, kind: BarrierKind, spec: &SampleSpec, samples: &[Sample]) -> ValidationReport {
        let cfg = self.config();
        let eps = self.params.epsilon;
        let mut cases = [CaseSummary::default(), CaseSummary::default(), CaseSummary::default()];
        let mut clamped = 0usize;
        let mut worst: Option<WorstPoint> = None;
        let mut order_violations = 0usize;
        let mut min_margin = f64::INFINITY;
        for s in samples {
            let gap = s.upper - s.lower;
            min_margin = min_margin.min(gap);
            if gap < -ORDER_TOL {
                order_violations += 1;
            }
            let idx = if s.eta > 1.0 { 0 } else if s.eta < -1.0 { 1 } else { 2 };
            match s.residual {
                None => clamped += 1,
                Some(r) => {
                    cases[idx].count += 1;
                    if r < cases[idx].min_residual {
                        cases[idx].min_residual = r;
                    }
                    if worst.as_ref().is_none_or(|w| r < w.residual) {
                        worst = Some(WorstPoint { t: s.t, z: s.z.clone(), eta: s.eta, residual: r, ridge_distance: None });
                    }
                }
            }
        }
        if let Some(w) = worst.as_mut() {
            if cfg.len() >= 2 {
                w.ridge_distance = cfg.ridge_distance(w.t, &w.z).ok();
            }
        }
        let min_residual = cases.iter().map(|c| c.min_residual).fold(f64::INFINITY, f64::min);
        let x_prime = search_threshold(samples.iter().filter(|s| s.eta > 0.0).map(|s| (s.eta, s.residual)));
        let x_double_prime = search_threshold(samples.iter().filter(|s| s.eta < 0.0).map(|s| (-s.eta, s.residual)));

        // V̄ - V̲ against ridge distance (upper barrier only)
        let (mut gap_radius, mut c_star, v_star) = (None, None, spec.v_star);
        if kind == BarrierKind::Upper && cfg.len() >= 2 {
            let mut by_dist: Vec<(f64, f64, f64)> = samples
                .iter()
                .filter_map(|s| {
                    let d = cfg.ridge_distance(s.t, &s.z).ok()?;
                    Some((d, (s.upper - s.lower).abs(), cfg.min_scaled_q(s.t, &s.z)))
                })
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            // smallest radius beyond which every sampled gap is within 2ε
            let mut radius = None;
            for (i, item) in by_dist.iter().enumerate().rev() {
                if item.1 > 2.0 * eps {
                    radius = by_dist.get(i + 1).map(|n| n.0);
                    break;
                }
                if i == 0 {
                    radius = Some(0.0);
                }
            }
            gap_radius = radius;
            if let (Some(r), Some(v)) = (radius, v_star) {
                let fitted = by_dist
                    .iter()
                    .filter(|(d, _, _)| *d >= r)
                    .map(|(_, g, mq)| g / (1.0f64).min((-2.0 * v * mq).exp()) / eps)
                    .fold(0.0, f64::max);
                c_star = Some(fitted);
            }
        }
        ValidationReport {
            kind,
            params: self.params,
            samples: samples.len(),
            clamped,
            min_residual,
            cases: CaseReport { ahead: cases[0], behind: cases[1], middle: cases[2] },
            x_prime,
            x_double_prime,
            order_violations,
            min_upper_minus_lower: min_margin,
            gap_radius,
            v_star,
            c_star_fit: c_star,
            worst,
            pass: min_residual >= RESIDUAL_TOL && order_violations == 0,
        }
    }
}

/// Smallest `X ∈ {1, 2, 4, ...}` such that every residual with `|η| > X` is
/// above tolerance; `None` if even the largest candidate fails.
fn search_threshold(items: impl Iterator<Item = (f64, Option<f64>)>) -> Option<f64> {
    let bad: Vec<f64> = items
        .filter_map(|(e, r)| r.filter(|r| *r < RESIDUAL_TOL).map(|_| e))
        .collect();
    let worst = bad.iter().copied().fold(0.0, f64::max);
    (0..12).map(|k| (1u64 << k) as f64).find(|x| *x >= worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub value: f64,
    pub residual: f64,
    pub eta: f64,
}

#[derive(Debug, Clone)]
struct Sample {
    t: f64,
    z: Vec<f64>,
    eta: f64,
    residual: Option<f64>,
    upper: f64,
    lower: f64,
}

/// Where and how densely residuals are sampled. Times and horizontal
/// positions are drawn in the surface's scaled coordinates (so the box in
/// physical units is `half_width / α`); heights are drawn relative to the
/// surface, with a third of the samples in each of `η > 1`, `η < -1` and
/// `|η| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub count: usize,
    pub half_width: f64,
    pub eta_ahead: f64,
    pub eta_behind: f64,
    pub seed: u64,
    /// Rate for the weighted-gap fit; `None` skips it.
    #[serde(default)]
    pub v_star: Option<f64>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { count: 100_000, half_width: 6.0, eta_ahead: 60.0, eta_behind: 40.0, seed: 7, v_star: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub count: usize,
    pub min_residual: f64,
}

impl Default for CaseSummary {
    fn default() -> Self {
        Self { count: 0, min_residual: f64::INFINITY }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub ahead: CaseSummary,
    pub behind: CaseSummary,
    pub middle: CaseSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstPoint {
    pub t: f64,
    pub z: Vec<f64>,
    pub eta: f64,
    pub residual: f64,
    pub ridge_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: BarrierKind,
    pub params: BarrierParams,
    pub samples: usize,
    /// samples where the barrier equals 1 (excluded from the residual)
    pub clamped: usize,
    pub min_residual: f64,
    pub cases: CaseReport,
    pub x_prime: Option<f64>,
    pub x_double_prime: Option<f64>,
    pub order_violations: usize,
    pub min_upper_minus_lower: f64,
    /// ridge distance beyond which all sampled `|V̄ - V̲| ≤ 2ε`
    pub gap_radius: Option<f64>,
    pub v_star: Option<f64>,
    pub c_star_fit: Option<f64>,
    pub worst: Option<WorstPoint>,
    pub pass: bool,
}

/// Outcome of the automatic parameter search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Schedule {
    pub params: BarrierParams,
    pub fit: SurfaceFit,
    pub beta1_star: f64,
    pub beta2_star: f64,
    pub v_star: f64,
    pub kappa: f64,
    /// `(α, min residual)` for each attempt
    pub alpha_attempts: Vec<(f64, f64)>,
    /// `(ϱ, min residual)` for each attempt
    pub varrho_attempts: Vec<(f64, f64)>,
    pub upper: ValidationReport,
    pub time_shifted: ValidationReport,
}

impl Schedule {
    pub fn pass(&self) -> bool {
        self.upper.pass && self.time_shifted.pass
    }
}

/// `v⋆`: half of `min{αβ₀/2, (c/2) min_i{sin θ_i, αβ, α, α/sqrt(1 + (Ĉ + max|ν cot θ|)²)}}`.
pub fn v_star(cfg: &FrontConfiguration, profile: &WaveProfile, alpha: f64, beta: f64, c_fit: f64) -> f64 {
    let k = (1.0 + (c_fit + cfg.max_slope()).powi(2)).sqrt();
    let inner = cfg.min_sin_theta().min(alpha * beta).min(alpha).min(alpha / k);
    0.5 * (alpha * profile.beta0() / 2.0).min(profile.speed() / 2.0 * inner)
}

/// `min |U'|` over `[-1, 1]`.
pub fn kappa(profile: &WaveProfile) -> f64 {
    (0..=200)
        .map(|k| profile.eval3(-1.0 + 2.0 * k as f64 / 200.0).1.abs())
        .fold(f64::INFINITY, f64::min)
}

/// Options for [`auto_schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    pub sample: SampleSpec,
    pub fit: SurfaceSample,
    pub max_alpha_halvings: usize,
    pub max_varrho_doublings: usize,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            sample: SampleSpec::default(),
            fit: SurfaceSample { count: 20_000, half_width: 8.0, seed: 11 },
            max_alpha_halvings: 24,
            max_varrho_doublings: 24,
        }
    }
}

/// Fits the surface constants, sets `β = β*`, `ε = δ = γ⋆/8`,
/// `λ = ½ min{-f'(1)/4, βc²/16}`, then halves `α` from 1 until `V̄`
/// certifies (plus one more halving for margin) and
/// doubles `ϱ` (starting from `3(‖f'‖ + λ)/(λκc)`) until `W⁺_δ` certifies.
pub fn auto_schedule(cfg: &FrontConfiguration, profile: &WaveProfile, opts: &ScheduleOptions) -> Result<Schedule> {
    let nl = *profile.nonlinearity();
    let c = profile.speed();
    let unit = ScaledSurface::new(cfg.clone(), 1.0)?;
    let fit = unit.fit_constants(&opts.fit)?;
    let c1 = if fit.c1_hat.is_finite() { fit.c1_hat } else { 0.0 };
    let (b1, b2) = beta_star(c1, cfg.max_slope());
    let beta = b1.min(b2);
    let epsilon = nl.gamma_star() / 8.0;
    let delta = nl.gamma_star() / 8.0;
    let lambda = 0.5 * lambda_bound(&nl, c, beta);
    let kap = kappa(profile);
    let mut varrho = 3.0 * (nl.lipschitz() + lambda) / (lambda * kap * c);

    let mut alpha = 1.0;
    let mut alpha_attempts = Vec::new();
    let mut upper = None;
    let mut passed_once = false;
    for _ in 0..=opts.max_alpha_halvings + 1 {
        let params = BarrierParams { epsilon, alpha, beta, delta, lambda, varrho };
        let b = Barriers::new(cfg, profile, params)?;
        let mut spec = opts.sample;
        spec.v_star = Some(v_star(cfg, profile, alpha, beta, c1));
        let rep = b.validate(BarrierKind::Upper, &spec)?;
        alpha_attempts.push((alpha, rep.min_residual));
        let ok = rep.pass;
        upper = Some(rep);
        // one extra halving past the first pass keeps α away from the threshold
        if ok && passed_once {
            break;
        }
        passed_once |= ok;
        alpha *= 0.5;
    }
    let upper = upper.expect("at least one attempt");

    let mut varrho_attempts = Vec::new();
    let mut timed = None;
    if upper.pass {
        for _ in 0..=opts.max_varrho_doublings {
            let params = BarrierParams { epsilon, alpha, beta, delta, lambda, varrho };
            let b = Barriers::new(cfg, profile, params)?;
            let rep = b.validate(BarrierKind::TimeShifted, &opts.sample)?;
            varrho_attempts.push((varrho, rep.min_residual));
            let ok = rep.pass;
            timed = Some(rep);
            if ok {
                break;
            }
            varrho *= 2.0;
        }
    }
    let params = BarrierParams { epsilon, alpha, beta, delta, lambda, varrho };
    let time_shifted = match timed {
        Some(r) => r,
        None => Barriers::new(cfg, profile, params)?.validate(BarrierKind::TimeShifted, &opts.sample)?,
    };
    Ok(Schedule {
        params,
        fit,
        beta1_star: b1,
        beta2_star: b2,
        v_star: v_star(cfg, profile, alpha, beta, c1),
        kappa: kap,
        alpha_attempts,
        varrho_attempts,
        upper,
        time_shifted,
    })
}
