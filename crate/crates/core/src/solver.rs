//! Finite-difference solver for `u_t = Δu + f(u)` on boxes.
//!
//! Cells sit at `origin + j·dx` (row-major, last axis contiguous). The outer
//! ring of cells carries Dirichlet data and everything inside is advanced
//! with the `2N+1`-point Laplacian. Each step is parallel over rows of the
//! last axis; every cell is computed from the previous state alone, so the
//! result does not depend on how rows are distributed over threads.
//!
//! Under the step bound `1 - 2N dt/dx² - dt·Lip(f) ≥ 0` the explicit Euler
//! map is monotone, and the SSP-RK2 stage combination inherits that. With the
//! lower barrier as a floor (`u ← max(u, V̲(t + dt))` after each step) the
//! iteration is order-preserving, nondecreasing in time when started from
//! `V̲`, and increasing in the start offset.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barriers::Barriers;
use crate::error::{invalid, Error, Result};
use crate::geometry::FrontConfiguration;
use crate::nonlinearity::CombustionNonlinearity;
use crate::wave_profile::WaveProfile;

/// Range slack for the maximum principle.
pub const RANGE_TOL: f64 = 1e-12;
/// Tolerance for order comparisons between runs.
pub const ORDER_TOL: f64 = 1e-10;
pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    counts: Vec<usize>,
    dx: f64,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(counts: Vec<usize>, dx: f64, origin: Vec<f64>) -> Result<Self> {
        if counts.is_empty() || counts.len() > 3 {
            return Err(invalid("counts", format!("dimension must be 1, 2 or 3, got {}", counts.len())));
        }
        if counts.len() != origin.len() {
            return Err(Error::Dimension { expected: counts.len(), got: origin.len() });
        }
        if let Some(c) = counts.iter().find(|c| **c < MIN_CELLS) {
            return Err(invalid("counts", format!("need at least {MIN_CELLS} cells per axis, got {c}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(invalid("dx", format!("must be positive, got {dx}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid("origin", "must be finite"));
        }
        Ok(Self { counts, dx, origin })
    }

    /// A grid whose cell centres are symmetric about `center`.
    pub fn centered(counts: Vec<usize>, dx: f64, center: &[f64]) -> Result<Self> {
        let origin = counts
            .iter()
            .zip(center)
            .map(|(n, c)| c - 0.5 * (*n as f64 - 1.0) * dx)
            .collect();
        Self::new(counts, dx, origin)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical side lengths `(n - 1) dx`.
    pub fn extents(&self) -> Vec<f64> {
        self.counts.iter().map(|n| (*n as f64 - 1.0) * self.dx).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.counts[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = flat % self.counts[k];
            flat /= self.counts[k];
        }
        out
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    #[inline]
    pub fn point_into(&self, mut flat: usize, buf: &mut [f64]) {
        for k in (0..self.dim()).rev() {
            let i = flat % self.counts[k];
            flat /= self.counts[k];
            buf[k] = self.origin[k] + i as f64 * self.dx;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        self.point_into(flat, &mut z);
        z
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.dx
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat).iter().zip(&self.counts).any(|(i, n)| *i == 0 || *i + 1 == *n)
    }

    /// Flat indices of the Dirichlet ring in increasing order.
    pub fn boundary_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|p| self.is_boundary(*p)).collect()
    }

    /// Whether the row (a run along the last axis) with the given index is
    /// entirely in the Dirichlet ring.
    fn row_is_boundary(&self, row: usize) -> bool {
        let m = self.dim() - 1;
        let mut r = row;
        for k in (0..m).rev() {
            let i = r % self.counts[k];
            r /= self.counts[k];
            if i == 0 || i + 1 == self.counts[k] {
                return true;
            }
        }
        false
    }

    fn row_len(&self) -> usize {
        self.counts[self.dim() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values, time })
    }

    pub fn constant(grid: Grid, value: f64, time: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values, time }
    }

    /// Evaluates `g(z)` at every cell centre.
    pub fn from_fn<G>(grid: Grid, time: f64, g: G) -> Self
    where
        G: Fn(&[f64]) -> f64 + Sync,
    {
        let row = grid.row_len();
        let mut values = vec![0.0; grid.len()];
        values.par_chunks_mut(row).enumerate().for_each(|(r, out)| {
            let mut z = vec![0.0; grid.dim()];
            for (j, v) in out.iter_mut().enumerate() {
                grid.point_into(r * row + j, &mut z);
                *v = g(&z);
            }
        });
        Self { grid, values, time }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |self - other|`.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `min (self - other)` with the first cell attaining it.
    pub fn min_diff(&self, other: &Field) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (p, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let d = a - b;
            if d < best.0 {
                best = (d, p);
            }
        }
        best
    }

    /// How far the values leave `[0, 1]`.
    pub fn range_violation(&self) -> f64 {
        self.values.iter().map(|v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max)
    }

    /// Values along the last axis through the cell `multi` (other indices
    /// fixed), as `(coordinate, value)` pairs.
    pub fn line(&self, multi: &[usize]) -> Vec<(f64, f64)> {
        let m = self.grid.dim() - 1;
        let mut idx = multi.to_vec();
        (0..self.grid.counts[m])
            .map(|j| {
                idx[m] = j;
                (self.grid.coordinate(m, j), self.values[self.grid.index(&idx)])
            })
            .collect()
    }

    /// Writes a 1D slice along the last axis as `coordinate,value` CSV.
    pub fn write_line_csv<W: std::io::Write>(&self, mut out: W, multi: &[usize]) -> Result<()> {
        writeln!(out, "# t = {:.17e}", self.time)?;
        writeln!(out, "z,u")?;
        for (z, u) in self.line(multi) {
            writeln!(out, "{z:.17e},{u:.17e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExplicitEuler,
    Rk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// `V̲(t, ·)` on the ring.
    DirichletLower,
    /// `V̄(t, ·)` on the ring.
    DirichletUpper,
    /// `U(q_1(t, ·))` of the first front on the ring.
    DirichletExactPlanar,
    /// Ring values stay as in the initial data.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub boundary: BoundaryPolicy,
    pub cfl_safety: f64,
    /// Clamp from below by `V̲(t + dt)` after every step.
    pub floor_lower: bool,
}

impl SolverConfig {
    /// Largest step with `dt ≤ safety·dx²/(2N)` that divides `interval`
    /// evenly, so snapshots fall on steps.
    pub fn cfl(grid: &Grid, safety: f64, interval: f64, scheme: Scheme, boundary: BoundaryPolicy) -> Result<Self> {
        if !(safety > 0.0 && safety < 1.0) {
            return Err(invalid("cfl_safety", format!("must lie in (0, 1), got {safety}")));
        }
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(invalid("snapshot_interval", format!("must be positive, got {interval}")));
        }
        let bound = safety * grid.dx * grid.dx / (2.0 * grid.dim() as f64);
        let steps = (interval / bound).ceil();
        Ok(Self {
            dt: interval / steps,
            scheme,
            boundary,
            cfl_safety: safety,
            floor_lower: boundary != BoundaryPolicy::Frozen,
        })
    }

    /// Checks the diffusion bound and that the Euler map stays monotone.
    pub fn check(&self, grid: &Grid, nl: &CombustionNonlinearity) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return Err(invalid("cfl_safety", format!("must lie in (0, 1), got {}", self.cfl_safety)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let n = grid.dim() as f64;
        let h2 = grid.dx * grid.dx;
        let bound = self.cfl_safety * h2 / (2.0 * n);
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt: self.dt, bound });
        }
        let mono = 1.0 / (2.0 * n / h2 + nl.lipschitz());
        if self.dt > mono {
            return Err(Error::Cfl { dt: self.dt, bound: mono });
        }
        Ok(())
    }

    /// Number of steps covering `interval`, which must be a multiple of `dt`.
    pub fn steps_in(&self, interval: f64) -> Result<usize> {
        let k = (interval / self.dt).round();
        if k < 0.0 || (k * self.dt - interval).abs() > 1e-9 * interval.abs().max(1.0) {
            return Err(invalid("dt", format!("{interval} is not a whole number of steps of {}", self.dt)));
        }
        Ok(k as usize)
    }
}

/// Dirichlet data resolved against the objects it needs.
#[derive(Debug, Clone, Copy)]
pub enum Boundary<'a> {
    Lower { cfg: &'a FrontConfiguration, profile: &'a WaveProfile },
    Upper(&'a Barriers),
    ExactPlanar { cfg: &'a FrontConfiguration, profile: &'a WaveProfile },
    Frozen,
}

impl<'a> Boundary<'a> {
    pub fn resolve(
        policy: BoundaryPolicy,
        cfg: &'a FrontConfiguration,
        profile: &'a WaveProfile,
        barriers: Option<&'a Barriers>,
    ) -> Result<Self> {
        Ok(match policy {
            BoundaryPolicy::DirichletLower => Boundary::Lower { cfg, profile },
            BoundaryPolicy::DirichletExactPlanar => Boundary::ExactPlanar { cfg, profile },
            BoundaryPolicy::Frozen => Boundary::Frozen,
            BoundaryPolicy::DirichletUpper => {
                Boundary::Upper(barriers.ok_or_else(|| invalid("boundary", "dirichlet-upper needs barrier parameters"))?)
            }
        })
    }
}

/// `V̲(t, z) = U(m(z) - c t)` with `m(z) = min_i q_i(0, z)` cached per cell.
///
/// In the two exponential tails of `U` the value factors into a per-cell
/// constant times a per-time constant, so only cells in the transition band
/// touch the profile table. Every consumer (initial data, ring, floor,
/// diagnostics) goes through this one evaluation, which keeps the order
/// comparisons between runs exact.
#[derive(Debug, Clone)]
pub struct LowerCache<'a> {
    profile: &'a WaveProfile,
    speed: f64,
    theta: f64,
    beta0: f64,
    d0: f64,
    m0: Vec<f64>,
    /// `e^{-c m}`, or NaN when out of range
    right: Vec<f64>,
    /// `w(D₀) e^{β₀(m - D₀)}`, or NaN when out of range
    left: Vec<f64>,
}

/// Per-time factors for [`LowerCache`].
#[derive(Debug, Clone, Copy)]
pub struct LowerAt {
    t: f64,
    right: f64,
    left: f64,
}

const EXP_RANGE: f64 = 600.0;

impl<'a> LowerCache<'a> {
    pub fn new(grid: &Grid, cfg: &FrontConfiguration, profile: &'a WaveProfile) -> Result<Self> {
        if cfg.dim() != grid.dim() {
            return Err(Error::Dimension { expected: cfg.dim(), got: grid.dim() });
        }
        let m0 = Field::from_fn(grid.clone(), 0.0, |z| cfg.min_q(0.0, z).0).values;
        let c = cfg.speed();
        let beta0 = profile.beta0();
        let (d0, w0) = profile.left_anchor();
        let guarded = |x: f64| if x.abs() < EXP_RANGE { x.exp() } else { f64::NAN };
        let right = m0.iter().map(|m| guarded(-c * m)).collect();
        let left = m0.iter().map(|m| w0 * guarded(beta0 * (m - d0))).collect();
        Ok(Self { profile, speed: c, theta: profile.theta(), beta0, d0, m0, right, left })
    }

    pub fn at(&self, t: f64) -> LowerAt {
        let ct = self.speed * t;
        LowerAt { t, right: (self.speed * ct).exp(), left: (-self.beta0 * ct).exp() }
    }

    #[inline]
    pub fn value_at(&self, p: usize, at: &LowerAt) -> f64 {
        let d = self.m0[p] - self.speed * at.t;
        let v = if d >= 0.0 {
            self.theta * self.right[p] * at.right
        } else if d <= self.d0 {
            1.0 - self.left[p] * at.left
        } else {
            return self.profile.eval(d);
        };
        if v.is_finite() {
            v
        } else {
            self.profile.eval(d)
        }
    }

    pub fn value(&self, p: usize, t: f64) -> f64 {
        self.value_at(p, &self.at(t))
    }

    pub fn field(&self, grid: &Grid, t: f64) -> Field {
        let at = self.at(t);
        let values = (0..self.m0.len()).into_par_iter().map(|p| self.value_at(p, &at)).collect();
        Field { grid: grid.clone(), values, time: t }
    }
}

/// Advances fields on one grid. Holds scratch buffers and the boundary
/// bookkeeping so that repeated steps do not allocate.
pub struct Stepper<'a> {
    nl: CombustionNonlinearity,
    grid: Grid,
    config: SolverConfig,
    boundary: Boundary<'a>,
    lower: Option<LowerCache<'a>>,
    ring: Vec<usize>,
    ring_points: Vec<f64>,
    stage: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Stepper<'a> {
    /// `lower` enables the `V̲` floor (when the config asks for it) and
    /// speeds up the `dirichlet-lower` ring.
    pub fn new(
        nl: &CombustionNonlinearity,
        grid: &Grid,
        config: SolverConfig,
        boundary: Boundary<'a>,
        lower: Option<(&'a FrontConfiguration, &'a WaveProfile)>,
    ) -> Result<Self> {
        config.check(grid, nl)?;
        if config.floor_lower && lower.is_none() {
            return Err(invalid("floor_lower", "the floor needs the front configuration and profile"));
        }
        let lower = match lower {
            Some((cfg, profile)) => Some(LowerCache::new(grid, cfg, profile)?),
            None => None,
        };
        let ring = grid.boundary_cells();
        let mut ring_points = vec![0.0; ring.len() * grid.dim()];
        for (k, p) in ring.iter().enumerate() {
            grid.point_into(*p, &mut ring_points[k * grid.dim()..(k + 1) * grid.dim()]);
        }
        Ok(Self {
            nl: *nl,
            grid: grid.clone(),
            config,
            boundary,
            lower,
            ring,
            ring_points,
            stage: vec![0.0; grid.len()],
            next: vec![0.0; grid.len()],
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn config(&self) -> &SolverConfig {
        &self.config
    }
    pub fn dt(&self) -> f64 {
        self.config.dt
    }
    pub fn lower(&self) -> Option<&LowerCache<'a>> {
        self.lower.as_ref()
    }

    /// `V̲(t, ·)` on this grid; needs the lower cache.
    pub fn lower_field(&self, t: f64) -> Result<Field> {
        let l = self.lower.as_ref().ok_or_else(|| invalid("lower", "stepper was built without the lower barrier"))?;
        Ok(l.field(&self.grid, t))
    }

    /// One Euler substep `out = u + dt(Δ_h u + f(u))` on interior cells;
    /// ring cells are copied.
    fn euler(
        grid: &Grid,
        nl: &CombustionNonlinearity,
        dt: f64,
        u: &[f64],
        out: &mut [f64],
        floor: Option<(&LowerCache<'_>, LowerAt)>,
    ) {
        let row = grid.row_len();
        let strides = grid.strides();
        let others: Vec<usize> = strides[..grid.dim() - 1].to_vec();
        let inv_h2 = 1.0 / (grid.dx * grid.dx);
        out.par_chunks_mut(row).enumerate().for_each(|(r, o)| {
            let base = r * row;
            if grid.row_is_boundary(r) {
                o.copy_from_slice(&u[base..base + row]);
                return;
            }
            o[0] = u[base];
            o[row - 1] = u[base + row - 1];
            for j in 1..row - 1 {
                let p = base + j;
                let c = u[p];
                let mut lap = u[p - 1] + u[p + 1] - 2.0 * c;
                for s in &others {
                    lap += u[p - s] + u[p + s] - 2.0 * c;
                }
                o[j] = c + dt * (lap * inv_h2 + nl.f(c));
            }
            if let Some((l, at)) = &floor {
                for (j, v) in o.iter_mut().enumerate().take(row - 1).skip(1) {
                    let low = l.value_at(base + j, at);
                    if *v < low {
                        *v = low;
                    }
                }
            }
        });
    }

    fn apply_ring(&self, values: &mut [f64], t: f64) -> Result<()> {
        let d = self.grid.dim();
        match self.boundary {
            Boundary::Frozen => {}
            Boundary::Lower { cfg, profile } => match &self.lower {
                Some(l) => {
                    let at = l.at(t);
                    for p in &self.ring {
                        values[*p] = l.value_at(*p, &at);
                    }
                }
                None => {
                    for (k, p) in self.ring.iter().enumerate() {
                        values[*p] = cfg.subsolution_lower(profile, t, &self.ring_points[k * d..(k + 1) * d]);
                    }
                }
            },
            Boundary::ExactPlanar { cfg, profile } => {
                for (k, p) in self.ring.iter().enumerate() {
                    values[*p] = profile.eval(cfg.q(0, t, &self.ring_points[k * d..(k + 1) * d]));
                }
            }
            Boundary::Upper(b) => {
                let vals: Result<Vec<f64>> = (0..self.ring.len())
                    .into_par_iter()
                    .map(|k| b.supersolution_upper(t, &self.ring_points[k * d..(k + 1) * d]))
                    .collect();
                for (p, v) in self.ring.iter().zip(vals?) {
                    values[*p] = v;
                }
            }
        }
        Ok(())
    }

    /// Ring values and floor for the state at time `t`.
    fn finish(&self, values: &mut [f64], t: f64, interior_floored: bool) -> Result<()> {
        self.apply_ring(values, t)?;
        if self.config.floor_lower {
            let l = self.lower.as_ref().expect("checked at construction");
            let at = l.at(t);
            let floor_one = |p: usize, v: &mut f64| {
                let low = l.value_at(p, &at);
                if *v < low {
                    *v = low;
                }
            };
            if interior_floored {
                for p in &self.ring {
                    floor_one(*p, &mut values[*p]);
                }
            } else {
                values.par_iter_mut().enumerate().for_each(|(p, v)| floor_one(p, v));
            }
        }
        Ok(())
    }

    /// Puts the ring data (and floor) of time `field.time` onto `field`.
    pub fn impose(&self, field: &mut Field) -> Result<()> {
        let t = field.time;
        self.finish(&mut field.values, t, false)
    }

    /// Advances `field` by one step; the new time is `t_next` (normally
    /// `field.time + dt`, passed explicitly so that lockstep runs share
    /// bit-identical time stamps).
    pub fn step_to(&mut self, field: &mut Field, t_next: f64) -> Result<()> {
        let dt = self.config.dt;
        let floor = match (&self.lower, self.config.floor_lower) {
            (Some(l), true) => Some((l, l.at(t_next))),
            _ => None,
        };
        let fused = match self.config.scheme {
            Scheme::ExplicitEuler => {
                Self::euler(&self.grid, &self.nl, dt, &field.values, &mut self.next, floor);
                floor.is_some()
            }
            Scheme::Rk2 => {
                Self::euler(&self.grid, &self.nl, dt, &field.values, &mut self.stage, None);
                let mut stage = std::mem::take(&mut self.stage);
                self.apply_ring(&mut stage, t_next)?;
                Self::euler(&self.grid, &self.nl, dt, &stage, &mut self.next, None);
                self.next.par_iter_mut().zip(field.values.par_iter()).for_each(|(n, u)| *n = 0.5 * (*u + *n));
                self.stage = stage;
                false
            }
        };
        let mut next = std::mem::take(&mut self.next);
        self.finish(&mut next, t_next, fused)?;
        std::mem::swap(&mut field.values, &mut next);
        self.next = next;
        field.time = t_next;
        Ok(())
    }

    pub fn step(&mut self, field: &mut Field) -> Result<()> {
        let t = field.time + self.config.dt;
        self.step_to(field, t)
    }
}

fn check_blowup(field: &Field) -> Result<()> {
    let worst = field.values.iter().copied().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    if worst.is_nan() || worst > 2.0 {
        return Err(Error::BlowUp { t: field.time, value: worst });
    }
    Ok(())
}

/// Runs from `u0` to `t_end`, returning snapshots every `interval`
/// (including the initial state).
pub fn solve_cauchy(stepper: &mut Stepper<'_>, u0: Field, t_end: f64, interval: f64) -> Result<Vec<Field>> {
    let mut out = Vec::new();
    run_with(stepper, u0, t_end, interval, |f| {
        out.push(f.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Like [`solve_cauchy`] but hands each snapshot to `observe` instead of
/// keeping it.
pub fn run_with<F>(stepper: &mut Stepper<'_>, u0: Field, t_end: f64, interval: f64, mut observe: F) -> Result<Field>
where
    F: FnMut(&Field) -> Result<()>,
{
    let per = stepper.config().steps_in(interval)?;
    let total = stepper.config().steps_in(t_end - u0.time)?;
    let t0 = u0.time;
    let dt = stepper.dt();
    let mut u = u0;
    stepper.impose(&mut u)?;
    check_blowup(&u)?;
    observe(&u)?;
    for k in 1..=total {
        stepper.step_to(&mut u, t0 + k as f64 * dt)?;
        if k % per == 0 || k == total {
            check_blowup(&u)?;
            observe(&u)?;
        }
    }
    Ok(u)
}

/// Start offsets, window and snapshot spacing of the entire-solution
/// iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntireSpec {
    /// `n` values (runs start at `t = -n`), strictly increasing
    pub starts: Vec<f64>,
    pub window: [f64; 2],
    pub interval: f64,
    /// keep window snapshots of every run, not just the last
    #[serde(default = "default_true")]
    pub keep_members: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub t: f64,
    pub z: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntireReport {
    pub starts: Vec<f64>,
    pub window: [f64; 2],
    pub dt: f64,
    pub dx: f64,
    pub cells: usize,
    /// `min (u_{n_{k+1}} - u_{n_k})` over the window snapshots
    pub monotone_min: f64,
    pub monotone_ok: bool,
    pub offenders: Vec<Offender>,
    /// `sup |u_{n_{k+1}} - u_{n_k}|` over the window, per consecutive pair
    pub increments: Vec<f64>,
    /// min over all runs and all snapshot times of the discrete `∂_t u`
    pub min_time_derivative: f64,
    pub max_range_violation: f64,
    /// `min (V̂ - V̲)` and `max V̂` over the window
    pub vhat_min_gap: f64,
    pub vhat_max: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone)]
pub struct EntireSolution {
    pub report: EntireReport,
    /// window snapshots of the run with the largest offset
    pub vhat: Vec<Field>,
    /// discrete `∂_t V̂` at the same times
    pub vhat_rate: Vec<Field>,
    /// window snapshots of every run, if kept
    pub members: Vec<Vec<Field>>,
}

struct Member {
    start_step: usize,
    field: Option<Field>,
    window: Vec<Field>,
}

/// Runs the Cauchy problems started from `V̲(-n, ·)` for every `n` in
/// lockstep on a common time grid and compares them on the window.
pub fn entire_solution(
    nl: &CombustionNonlinearity,
    cfg: &FrontConfiguration,
    profile: &WaveProfile,
    grid: &Grid,
    config: SolverConfig,
    barriers: Option<&Barriers>,
    spec: &EntireSpec,
) -> Result<EntireSolution> {
    let clock = Instant::now();
    if spec.starts.is_empty() || spec.starts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("starts", "must be a nonempty strictly increasing list"));
    }
    let [w0, w1] = spec.window;
    if w1 < w0 {
        return Err(invalid("window", "end precedes start"));
    }
    let nmax = *spec.starts.last().unwrap();
    if -spec.starts[0] > w0 {
        return Err(invalid("window", "every run must have started by the window"));
    }
    let boundary = Boundary::resolve(config.boundary, cfg, profile, barriers)?;
    let mut stepper = Stepper::new(nl, grid, config, boundary, Some((cfg, profile)))?;
    let mut prober = Stepper::new(nl, grid, config, boundary, Some((cfg, profile)))?;
    let dt = stepper.dt();
    let t_min = -nmax;
    let total = config.steps_in(w1 - t_min)?;
    let per = config.steps_in(spec.interval)?;
    let w_start = config.steps_in(w0 - t_min)?;
    let mut members: Vec<Member> = spec
        .starts
        .iter()
        .map(|n| Ok(Member { start_step: config.steps_in(-n - t_min)?, field: None, window: Vec::new() }))
        .collect::<Result<_>>()?;
    let last = members.len() - 1;
    let mut vhat_rate = Vec::new();
    let mut min_rate = f64::INFINITY;
    let mut max_range = 0.0f64;

    for k in 0..=total {
        let t = t_min + k as f64 * dt;
        let snapshot = k % per == 0;
        let in_window = k >= w_start && (k - w_start) % per == 0;
        for (mi, m) in members.iter_mut().enumerate() {
            if k == m.start_step {
                let mut f = stepper.lower_field(t)?;
                stepper.impose(&mut f)?;
                m.field = Some(f);
            }
            let Some(f) = m.field.as_mut() else { continue };
            if k > m.start_step {
                stepper.step_to(f, t)?;
            }
            if snapshot || in_window {
                check_blowup(f)?;
                max_range = max_range.max(f.range_violation());
            }
            if in_window && (spec.keep_members || mi == last) {
                m.window.push(f.clone());
            }
            // discrete ∂_t u from one extra step taken on a copy
            if (snapshot || in_window) && k < total {
                let mut probe = f.clone();
                prober.step_to(&mut probe, t + dt)?;
                let mut rate = probe;
                rate.values.iter_mut().zip(&f.values).for_each(|(a, b)| *a = (*a - b) / dt);
                rate.time = t;
                min_rate = min_rate.min(rate.min());
                if in_window && mi == last {
                    vhat_rate.push(rate);
                }
            }
        }
    }

    // monotonicity in n and increments on the window
    let mut monotone_min = f64::INFINITY;
    let mut offenders = Vec::new();
    let mut increments = Vec::new();
    if spec.keep_members {
        for pair in members.windows(2) {
            let mut inc = 0.0f64;
            for (a, b) in pair[0].window.iter().zip(&pair[1].window) {
                let (d, p) = b.min_diff(a);
                monotone_min = monotone_min.min(d);
                if d < -ORDER_TOL && offenders.len() < 16 {
                    offenders.push(Offender { t: a.time, z: grid.point(p), value: d });
                }
                inc = inc.max(b.max_abs_diff(a));
            }
            increments.push(inc);
        }
    }
    let vhat = std::mem::take(&mut members[last].window);
    let mut vhat_min_gap = f64::INFINITY;
    let mut vhat_max = f64::NEG_INFINITY;
    for f in &vhat {
        let low = stepper.lower_field(f.time)?;
        vhat_min_gap = vhat_min_gap.min(f.min_diff(&low).0);
        vhat_max = vhat_max.max(f.max());
    }
    let members_out = if spec.keep_members {
        let mut all: Vec<Vec<Field>> = members.into_iter().map(|m| m.window).collect();
        all[last] = vhat.clone();
        all
    } else {
        Vec::new()
    };
    let report = EntireReport {
        starts: spec.starts.clone(),
        window: spec.window,
        dt,
        dx: grid.dx(),
        cells: grid.len(),
        monotone_min,
        monotone_ok: monotone_min >= -ORDER_TOL,
        offenders,
        increments,
        min_time_derivative: min_rate,
        max_range_violation: max_range,
        vhat_min_gap,
        vhat_max,
        runtime_s: clock.elapsed().as_secs_f64(),
    };
    Ok(EntireSolution { report, vhat, vhat_rate, members: members_out })
}

/// Settings for the 1D front-speed measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedOptions {
    /// Domain length in units of `1/c_est`.
    pub length: f64,
    /// Cell size in units of `1/c_est`.
    pub dx: f64,
    pub cfl_safety: f64,
    /// Level-set samples over the run.
    pub samples: usize,
    /// Initial plateau value on the left quarter.
    pub plateau: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        Self { length: 200.0, dx: 0.15, cfl_safety: 0.4, samples: 200, plateau: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedMeasurement {
    pub speed: f64,
    pub std_error: f64,
    /// the a-priori speed scale `2 sqrt(sup f(u)/u)` used for sizing
    pub speed_scale: f64,
    pub dx: f64,
    pub length: f64,
    pub t_end: f64,
    pub fitted_points: usize,
    /// `(t, position of u = 1/2)`
    pub trajectory: Vec<(f64, f64)>,
}

/// Upper speed scale `2 sqrt(sup_u f(u)/u)`, independent of the shooting
/// computation.
pub fn speed_scale(nl: &CombustionNonlinearity) -> f64 {
    let sup = (1..2000)
        .map(|k| {
            let u = k as f64 / 2000.0;
            nl.f(u) / u
        })
        .fold(0.0, f64::max);
    2.0 * sup.sqrt()
}

/// Position of the last crossing of `level` (scanning from the right),
/// linearly interpolated.
pub fn level_crossing(field: &Field, level: f64) -> Option<f64> {
    let v = &field.values;
    let g = &field.grid;
    (0..v.len() - 1).rev().find_map(|j| {
        let (a, b) = (v[j], v[j + 1]);
        if (a - level) * (b - level) <= 0.0 && a != b {
            let s = (a - level) / (a - b);
            Some(g.coordinate(0, j) + s * g.dx())
        } else {
            None
        }
    })
}

/// Least-squares slope of `y` against `x` with its standard error.
pub fn linear_fit(pts: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = pts.len();
    if n < 3 {
        return Err(Error::NotEnoughData(format!("{n} points for a line fit")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::NotEnoughData("abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - icept - slope * p.0).powi(2)).sum();
    let se = (rss / (nf - 2.0) / sxx).sqrt();
    Ok((slope, icept, se))
}

/// Measures the planar front speed from the PDE: step data (`plateau` on
/// the left quarter, 0 elsewhere), frozen ends, and a least-squares fit of
/// the `u = 1/2` position over the second half of the run.
pub fn measure_speed_1d(nl: &CombustionNonlinearity, opts: &SpeedOptions) -> Result<SpeedMeasurement> {
    let scale = speed_scale(nl);
    if scale <= 0.0 {
        return Err(Error::NoFront("f vanishes identically".into()));
    }
    let dx = opts.dx / scale;
    let length = opts.length / scale;
    let cells = (length / dx).round() as usize + 1;
    let grid = Grid::new(vec![cells], dx, vec![0.0])?;
    let quarter = 0.25 * length;
    let u0 = Field::from_fn(grid.clone(), 0.0, |z| if z[0] <= quarter { opts.plateau } else { 0.0 });
    // sample spacing: the time for the scale speed to cross length/samples
    let bound = opts.cfl_safety * dx * dx / 2.0;
    let sample_dt = length / (scale * opts.samples as f64);
    let per = (sample_dt / bound).ceil();
    let config = SolverConfig {
        dt: sample_dt / per,
        scheme: Scheme::ExplicitEuler,
        boundary: BoundaryPolicy::Frozen,
        cfl_safety: opts.cfl_safety,
        floor_lower: false,
    };
    let mut stepper = Stepper::new(nl, &grid, config, Boundary::Frozen, None)?;
    let per = per as usize;
    let t_max = 50.0 * length / scale;
    let stop = 0.8 * length;
    let mut u = u0;
    let mut traj = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * config.dt;
        if k % per == 0 {
            check_blowup(&u)?;
            let Some(pos) = level_crossing(&u, 0.5) else {
                return Err(Error::NoFront(format!("no u = 1/2 level at t = {t:.3}")));
            };
            traj.push((t, pos));
            if pos >= stop {
                break;
            }
            if t >= t_max {
                break;
            }
        }
        k += 1;
        stepper.step_to(&mut u, k as f64 * config.dt)?;
    }
    let t_end = traj.last().map(|p| p.0).unwrap_or(0.0);
    let half: Vec<(f64, f64)> = traj.iter().copied().filter(|p| p.0 >= 0.5 * t_end).collect();
    let (speed, _, se) = linear_fit(&half)?;
    let travelled = traj.last().unwrap().1 - traj[0].1;
    if !(speed > 3.0 * se) || travelled < 10.0 * dx {
        return Err(Error::NoFront(format!("level set does not propagate (slope {speed:.3e} ± {se:.1e})")));
    }
    if traj.last().unwrap().1 < stop {
        return Err(Error::DomainTooShort(format!("front reached only {:.3} of {length:.3} by t = {t_end:.1}", traj.last().unwrap().1)));
    }
    Ok(SpeedMeasurement {
        speed,
        std_error: se,
        speed_scale: scale,
        dx,
        length,
        t_end,
        fitted_points: half.len(),
        trajectory: traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nl() -> CombustionNonlinearity {
        CombustionNonlinearity::new(0.3, 1.0, 2.0, 0.1).unwrap()
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(vec![16, 20, 17], 0.5, vec![-1.0, 2.0, 0.0]).unwrap();
        for p in [0, 5, 333, g.len() - 1] {
            assert_eq!(g.index(&g.multi_index(p)), p);
        }
        assert_eq!(g.strides(), vec![340, 17, 1]);
        let z = g.point(g.index(&[1, 2, 3]));
        assert_eq!(z, vec![-0.5, 3.0, 1.5]);
        assert!(g.is_boundary(0));
        assert!(!g.is_boundary(g.index(&[1, 1, 1])));
        assert!(Grid::new(vec![8], 1.0, vec![0.0]).is_err());
        let c = Grid::centered(vec![17], 0.5, &[3.0]).unwrap();
        assert_close!(c.coordinate(0, 8), 3.0, 1e-15);
    }

    #[test]
    fn constant_states_are_fixed() {
        let g = Grid::new(vec![20, 20], 0.4, vec![0.0, 0.0]).unwrap();
        let n = nl();
        let cfg = SolverConfig::cfl(&g, 0.4, 0.2, Scheme::ExplicitEuler, BoundaryPolicy::Frozen).unwrap();
        for v in [0.0, 1.0, 0.3, 0.1] {
            for scheme in [Scheme::ExplicitEuler, Scheme::Rk2] {
                let mut s = Stepper::new(&n, &g, SolverConfig { scheme, ..cfg }, Boundary::Frozen, None).unwrap();
                let mut f = Field::constant(g.clone(), v, 0.0);
                for _ in 0..10 {
                    s.step(&mut f).unwrap();
                }
                assert!(f.values.iter().all(|x| *x == v));
            }
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = Grid::new(vec![20], 0.1, vec![0.0]).unwrap();
        let bad = SolverConfig { dt: 0.01, scheme: Scheme::ExplicitEuler, boundary: BoundaryPolicy::Frozen, cfl_safety: 0.4, floor_lower: false };
        assert!(matches!(bad.check(&g, &nl()), Err(Error::Cfl { .. })));
        let ok = SolverConfig::cfl(&g, 0.4, 1.0, Scheme::Rk2, BoundaryPolicy::Frozen).unwrap();
        assert!(ok.check(&g, &nl()).is_ok());
        assert_eq!(ok.steps_in(1.0).unwrap() as f64 * ok.dt, 1.0);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 2.0 + 0.5 * k as f64)).collect();
        let (s, i, se) = linear_fit(&pts).unwrap();
        assert_close!(s, 0.5, 1e-14);
        assert_close!(i, 2.0, 1e-13);
        assert!(se < 1e-12);
    }

    #[test]
    fn subthreshold_data_has_no_front() {
        let opts = SpeedOptions { plateau: 0.25, length: 40.0, ..SpeedOptions::default() };
        assert!(matches!(measure_speed_1d(&nl(), &opts), Err(Error::NoFront(_))));
    }

    #[test]
    fn lower_floor_keeps_order() {
        let n = nl();
        let prof = WaveProfile::compute(&n).unwrap();
        let cfg = FrontConfiguration::symmetric_v(prof.speed(), std::f64::consts::FRAC_PI_3).unwrap();
        let g = Grid::centered(vec![40, 40], 1.0, &[0.0, 0.0]).unwrap();
        let sc = SolverConfig::cfl(&g, 0.4, 1.0, Scheme::ExplicitEuler, BoundaryPolicy::DirichletLower).unwrap();
        let b = Boundary::Lower { cfg: &cfg, profile: &prof };
        let mut s = Stepper::new(&n, &g, sc, b, Some((&cfg, &prof))).unwrap();
        let mut u = s.lower_field(-5.0).unwrap();
        for _ in 0..50 {
            let prev = u.clone();
            s.step(&mut u).unwrap();
            assert!(u.min_diff(&prev).0 >= 0.0);
            assert!(u.min_diff(&s.lower_field(u.time).unwrap()).0 >= 0.0);
        }
    }

    #[test]
    fn lower_cache_matches_direct_evaluation() {
        let n = nl();
        let prof = WaveProfile::compute(&n).unwrap();
        let cfg = FrontConfiguration::symmetric_v(prof.speed(), std::f64::consts::FRAC_PI_3).unwrap();
        let g = Grid::centered(vec![64, 64], 2.0, &[0.0, 0.0]).unwrap();
        let l = LowerCache::new(&g, &cfg, &prof).unwrap();
        for t in [-50.0, -3.0, 0.0, 7.5, 40.0] {
            for p in 0..g.len() {
                let direct = cfg.subsolution_lower(&prof, t, &g.point(p));
                assert!((l.value(p, t) - direct).abs() <= 1e-13, "t={t} p={p}");
            }
        }
    }
}
