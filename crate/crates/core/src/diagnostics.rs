//! Measurable checks on computed fields: sandwiching between the barriers,
//! time monotonicity near the ridge, the transition-front radii `M_ε`, the
//! global mean speed, the weighted gap to `V̲`, and asymptotic stability.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barriers::Barriers;
use crate::error::{invalid, Error, Result};
use crate::geometry::{FrontConfiguration, Region};
use crate::nonlinearity::CombustionNonlinearity;
use crate::solver::{Boundary, Field, Grid, LowerCache, SolverConfig, Stepper};
use crate::wave_profile::WaveProfile;

/// Per-cell evaluation of `V̄` on a grid (one surface solve per column).
pub fn upper_field(barriers: &Barriers, grid: &Grid, t: f64) -> Result<Field> {
    column_field(grid, t, |x, ys, out| {
        let col = barriers.column(t, x)?;
        for (y, o) in ys.iter().zip(out.iter_mut()) {
            *o = barriers.upper_on(&col, *y);
        }
        Ok(())
    })
}

/// Per-cell evaluation of `W⁺_δ(t, ·)`.
pub fn time_barrier_field(barriers: &Barriers, grid: &Grid, t: f64) -> Result<Field> {
    let w = barriers.varpi(t);
    column_field(grid, t, |x, ys, out| {
        let col = barriers.column(w, x)?;
        for (y, o) in ys.iter().zip(out.iter_mut()) {
            *o = barriers.time_on(&col, t, *y);
        }
        Ok(())
    })
}

fn column_field<F>(grid: &Grid, t: f64, fill: F) -> Result<Field>
where
    F: Fn(&[f64], &[f64], &mut [f64]) -> Result<()> + Sync,
{
    let d = grid.dim();
    let row = grid.counts()[d - 1];
    let ys: Vec<f64> = (0..row).map(|j| grid.coordinate(d - 1, j)).collect();
    let mut values = vec![0.0; grid.len()];
    values
        .par_chunks_mut(row)
        .enumerate()
        .map(|(r, out)| {
            let z = grid.point(r * row);
            fill(&z[..d - 1], &ys, out)
        })
        .collect::<Result<Vec<()>>>()?;
    Field::new(grid.clone(), values, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeFloor {
    pub rho: f64,
    /// min of the discrete `∂_t u` over `{d((t, z), R) ≤ ρ}`
    pub k_hat: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `max (V̲ - u)⁺`
    pub lower_violation: f64,
    /// `max (u - V̄)⁺`, if barrier parameters were supplied
    pub upper_violation: Option<f64>,
    /// min of the discrete `∂_t u` over all cells
    pub min_rate: f64,
    pub tube_floors: Vec<TubeFloor>,
    /// `min (u - V̲)` and `max u` over the smallest tube
    pub tube_min_gap: f64,
    pub tube_max: f64,
    pub snapshots: usize,
}

/// `trajectories` are snapshot lists (one per run); `rates` are discrete
/// `∂_t u` fields at the snapshot times of the last run; `radii` are the
/// tube radii `ρ`.
pub fn sandwich_and_monotonicity(
    cfg: &FrontConfiguration,
    profile: &WaveProfile,
    barriers: Option<&Barriers>,
    trajectories: &[&[Field]],
    rates: &[Field],
    radii: &[f64],
) -> Result<SandwichReport> {
    let mut lower_violation = 0.0f64;
    let mut upper_violation = barriers.map(|_| 0.0f64);
    let mut snapshots = 0;
    let mut cache: Option<(Grid, LowerCache<'_>)> = None;
    for traj in trajectories {
        for f in traj.iter() {
            if cache.as_ref().is_none_or(|(g, _)| g != &f.grid) {
                cache = Some((f.grid.clone(), LowerCache::new(&f.grid, cfg, profile)?));
            }
            let (_, lc) = cache.as_ref().unwrap();
            let low = lc.field(&f.grid, f.time);
            lower_violation = lower_violation.max((-f.min_diff(&low).0).max(0.0));
            if let (Some(b), Some(uv)) = (barriers, upper_violation.as_mut()) {
                let up = upper_field(b, &f.grid, f.time)?;
                *uv = uv.max((-up.min_diff(f).0).max(0.0));
            }
            snapshots += 1;
        }
    }
    let mut min_rate = f64::INFINITY;
    let mut floors: Vec<TubeFloor> = radii.iter().map(|r| TubeFloor { rho: *r, k_hat: f64::INFINITY, cells: 0 }).collect();
    let rmin = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let mut tube_min_gap = f64::INFINITY;
    let mut tube_max = f64::NEG_INFINITY;
    let last = trajectories.last().copied().unwrap_or(&[]);
    for r in rates {
        min_rate = min_rate.min(r.min());
        let dist = ridge_distance_field(cfg, &r.grid, r.time)?;
        let state = last.iter().find(|f| f.time == r.time);
        let low = match state {
            Some(_) => Some(LowerCache::new(&r.grid, cfg, profile)?.field(&r.grid, r.time)),
            None => None,
        };
        for (p, d) in dist.iter().enumerate() {
            for fl in floors.iter_mut() {
                if *d <= fl.rho {
                    fl.k_hat = fl.k_hat.min(r.values[p]);
                    fl.cells += 1;
                }
            }
            if *d <= rmin {
                if let (Some(s), Some(l)) = (state, low.as_ref()) {
                    tube_min_gap = tube_min_gap.min(s.values[p] - l.values[p]);
                    tube_max = tube_max.max(s.values[p]);
                }
            }
        }
    }
    Ok(SandwichReport { lower_violation, upper_violation, min_rate, tube_floors: floors, tube_min_gap, tube_max, snapshots })
}

/// Space-time ridge distance of every cell.
pub fn ridge_distance_field(cfg: &FrontConfiguration, grid: &Grid, t: f64) -> Result<Vec<f64>> {
    if cfg.len() < 2 {
        return Err(Error::RidgeNeedsTwoFronts);
    }
    (0..grid.len()).into_par_iter().map(|p| cfg.ridge_distance(t, &grid.point(p))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MEps {
    pub eps: f64,
    pub m: f64,
    /// the radius reached the largest distance available on the grid
    pub censored: bool,
}

/// `M_ε` for each `ε`: the smallest radius beyond which every cell of
/// `Ω⁺_t` has `u ≥ 1 - ε` and every cell of `Ω⁻_t` has `u ≤ ε`, with `Γ_t`
/// the exact polytope interface.
pub fn extract_interface_and_meps(field: &Field, cfg: &FrontConfiguration, eps_list: &[f64]) -> Result<Vec<MEps>> {
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(invalid("eps", format!("must lie in (0, 1), got {e}")));
    }
    let g = &field.grid;
    let t = field.time;
    // (distance, region) per cell; cells on Γ_t count for neither side
    let cells: Vec<(f64, Region)> = (0..g.len())
        .into_par_iter()
        .map(|p| {
            let z = g.point(p);
            (cfg.interface_distance(t, &z), cfg.classify_region(t, &z))
        })
        .collect();
    let max_plus = cells.iter().filter(|c| c.1 == Region::Burned).map(|c| c.0).fold(0.0, f64::max);
    let max_minus = cells.iter().filter(|c| c.1 == Region::Unburned).map(|c| c.0).fold(0.0, f64::max);
    Ok(eps_list
        .iter()
        .map(|&eps| {
            let mut m = 0.0f64;
            let mut censored = false;
            for ((d, region), u) in cells.iter().zip(&field.values) {
                let bad = match region {
                    Region::Burned => *u < 1.0 - eps,
                    Region::Unburned => *u > eps,
                    Region::Interface => false,
                };
                if bad {
                    m = m.max(*d);
                    let edge = if *region == Region::Burned { max_plus } else { max_minus };
                    if *d >= edge - g.dx() {
                        censored = true;
                    }
                }
            }
            MEps { eps, m, censored }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedPair {
    pub t: f64,
    pub s: f64,
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSpeed {
    pub pairs: Vec<SpeedPair>,
    /// intercept of `d/|t-s|` regressed on `1/|t-s|`
    pub gamma_hat: f64,
    pub slope: f64,
    pub residual: f64,
    pub speed: f64,
    pub relative_error: f64,
    /// interface points per snapshot and their horizontal spacing
    pub samples_per_interface: usize,
    pub resolution: f64,
}

/// Global mean speed from the exact interfaces `Γ_t` at the given times,
/// using pairs with `|t - s| ≥ min_gap`. Interfaces are sampled at
/// `samples` points over the horizontal box `[lo, hi]` and distances to
/// the other interface are exact.
pub fn mean_speed_estimate(
    cfg: &FrontConfiguration,
    times: &[f64],
    lo: &[f64],
    hi: &[f64],
    samples: usize,
    min_gap: f64,
) -> Result<MeanSpeed> {
    if times.len() < 8 {
        return Err(Error::NotEnoughData(format!("{} snapshots; need at least 8", times.len())));
    }
    let span = times.iter().copied().fold(f64::NEG_INFINITY, f64::max) - times.iter().copied().fold(f64::INFINITY, f64::min);
    if span < min_gap {
        return Err(Error::NotEnoughData(format!("snapshots span {span:.3}, less than {min_gap:.3}")));
    }
    let mut pairs = Vec::new();
    for (a, &t) in times.iter().enumerate() {
        for &s in &times[a + 1..] {
            let gap = (t - s).abs();
            if gap == 0.0 || gap < min_gap {
                continue;
            }
            let pts = cfg.sample_interface(t, lo, hi, samples);
            let d = pts.par_iter().map(|z| cfg.interface_distance(s, z)).reduce(|| f64::INFINITY, f64::min);
            pairs.push(SpeedPair { t, s, distance: d, ratio: d / gap });
        }
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|p| (1.0 / (p.t - p.s).abs(), p.ratio)).collect();
    let (slope, gamma_hat, residual) = if pts.len() >= 3 && pts.iter().any(|p| (p.0 - pts[0].0).abs() > 0.0) {
        let (s, i, _) = crate::solver::linear_fit(&pts)?;
        let r = pts.iter().map(|p| (p.1 - i - s * p.0).abs()).fold(0.0, f64::max);
        (s, i, r)
    } else {
        let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len().max(1) as f64;
        (0.0, mean, pts.iter().map(|p| (p.1 - mean).abs()).fold(0.0, f64::max))
    };
    let width: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let per_axis = if lo.len() == 1 { samples } else { (samples as f64).sqrt().ceil() as usize };
    Ok(MeanSpeed {
        pairs,
        gamma_hat,
        slope,
        residual,
        speed: cfg.speed(),
        relative_error: (gamma_hat / cfg.speed() - 1.0).abs(),
        samples_per_interface: samples,
        resolution: width / (per_axis.max(2) - 1) as f64,
    })
}

/// Points where `u` crosses `level` along grid edges (linear interpolation).
pub fn level_set_points(field: &Field, level: f64) -> Vec<Vec<f64>> {
    let g = &field.grid;
    let strides = g.strides();
    let mut out = Vec::new();
    for p in 0..g.len() {
        let idx = g.multi_index(p);
        for k in 0..g.dim() {
            if idx[k] + 1 >= g.counts()[k] {
                continue;
            }
            let q = p + strides[k];
            let (a, b) = (field.values[p], field.values[q]);
            if (a - level) * (b - level) < 0.0 {
                let s = (a - level) / (a - b);
                let mut z = g.point(p);
                z[k] += s * g.dx();
                out.push(z);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetComparison {
    pub pairs: Vec<SpeedPair>,
    /// `max |d_level(t, s) - d_exact(t, s)|`
    pub max_discrepancy: f64,
    pub dx: f64,
}

/// Auxiliary mode: distances between the extracted `{u = level}` sets of
/// pairs of snapshots versus the exact interface distances.
pub fn level_set_discrepancy(cfg: &FrontConfiguration, fields: &[Field], level: f64, min_gap: f64) -> Result<LevelSetComparison> {
    let clouds: Vec<Vec<Vec<f64>>> = fields.iter().map(|f| level_set_points(f, level)).collect();
    if clouds.iter().any(|c| c.is_empty()) {
        return Err(Error::NoFront(format!("no u = {level} level set in some snapshot")));
    }
    let mut pairs = Vec::new();
    let mut worst = 0.0f64;
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            let (t, s) = (fields[b].time, fields[a].time);
            let gap = (t - s).abs();
            if gap == 0.0 || gap < min_gap {
                continue;
            }
            let d = clouds[b]
                .par_iter()
                .map(|p| clouds[a].iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
                .reduce(|| f64::INFINITY, f64::min);
            // exact distance sampled along the same horizontal extent
            let g = &fields[b].grid;
            let m = g.dim() - 1;
            let lo: Vec<f64> = g.origin()[..m].to_vec();
            let hi: Vec<f64> = (0..m).map(|k| g.origin()[k] + g.extents()[k]).collect();
            let exact = cfg
                .sample_interface(t, &lo, &hi, 4000)
                .par_iter()
                .map(|z| cfg.interface_distance(s, z))
                .reduce(|| f64::INFINITY, f64::min);
            worst = worst.max((d - exact).abs());
            pairs.push(SpeedPair { t, s, distance: d, ratio: d / gap });
        }
    }
    Ok(LevelSetComparison { pairs, max_discrepancy: worst, dx: fields[0].grid.dx() })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBin {
    pub lo: f64,
    pub hi: f64,
    pub sup_ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGap {
    pub v: f64,
    pub bins: Vec<GapBin>,
    pub decreasing: bool,
    pub last: f64,
    pub pass: bool,
}

/// Farthest-bin threshold for [`weighted_gap_report`].
pub const GAP_PASS: f64 = 0.05;

/// Slack when comparing neighbouring bins. Far from the ridge the ratio
/// settles on the O(dx²) gap between the discrete and the exact planar
/// wave, and bins on that plateau differ by round-off-sized amounts.
pub const GAP_MONOTONE_TOL: f64 = 1e-6;

/// `sup |u - V̲| / min{1, e^{-v min_i q_i/sin θ_i}}` binned by the space-time
/// distance to the ridge. Every `stride`-th cell along each axis is used.
pub fn weighted_gap_report(
    fields: &[Field],
    cfg: &FrontConfiguration,
    profile: &WaveProfile,
    v: f64,
    bins: usize,
    stride: usize,
) -> Result<WeightedGap> {
    if bins == 0 || stride == 0 {
        return Err(invalid("bins", "bins and stride must be positive"));
    }
    if fields.is_empty() {
        return Err(Error::NotEnoughData("no fields".into()));
    }
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for f in fields {
        let g = &f.grid;
        let lc = LowerCache::new(g, cfg, profile)?;
        let low = lc.field(g, f.time);
        let cells: Vec<usize> = (0..g.len()).filter(|p| g.multi_index(*p).iter().all(|i| i % stride == 0)).collect();
        let part: Result<Vec<(f64, f64)>> = cells
            .par_iter()
            .map(|&p| {
                let z = g.point(p);
                let d = cfg.ridge_distance(f.time, &z)?;
                let w = (-v * cfg.min_scaled_q(f.time, &z)).exp().min(1.0);
                Ok((d, (f.values[p] - low.values[p]).abs() / w))
            })
            .collect();
        samples.extend(part?);
    }
    let dmax = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let width = dmax / bins as f64;
    let mut out: Vec<GapBin> =
        (0..bins).map(|k| GapBin { lo: k as f64 * width, hi: (k + 1) as f64 * width, sup_ratio: 0.0, count: 0 }).collect();
    for (d, r) in samples {
        let k = ((d / width) as usize).min(bins - 1);
        out[k].sup_ratio = out[k].sup_ratio.max(r);
        out[k].count += 1;
    }
    let filled: Vec<&GapBin> = out.iter().filter(|b| b.count > 0).collect();
    let decreasing = filled.windows(2).all(|w| w[1].sup_ratio <= w[0].sup_ratio + GAP_MONOTONE_TOL);
    let last = filled.last().map(|b| b.sup_ratio).unwrap_or(0.0);
    Ok(WeightedGap { v, bins: out, decreasing, last, pass: decreasing && last <= GAP_PASS })
}

/// What the perturbed run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationBase {
    /// `V̂(0, ·) + bump`
    Entire,
    /// `V̲(0, ·) + bump`
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub base: PerturbationBase,
    /// bump height; zero gives the unperturbed run
    pub height: f64,
    /// bump radius around the ridge point nearest the grid centre
    pub radius: f64,
    /// ridge distance beyond which the decay condition is checked
    pub rho0: f64,
    /// weight rate of the decay condition
    pub v: f64,
    /// sampled cells for the decay condition
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub t: f64,
    /// `‖u(t) - V̂(t)‖∞`
    pub distance: f64,
    /// `max (u - W⁺_δ)⁺`
    pub above_w: Option<f64>,
    /// `δe^{-λt} + ‖V̄(ϖ(t)) - V̂(t)‖∞ + ϱδ sup|∂_t V̂|`
    pub envelope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub curve: Vec<StabilityPoint>,
    pub initial_below_w: Option<bool>,
    pub admissibility_ratio: f64,
    pub final_distance: f64,
    pub eventually_decreasing: bool,
    pub w_dominates: Option<bool>,
    pub within_envelope: Option<bool>,
    pub pass: bool,
    pub runtime_s: f64,
}

/// Threshold on the final distance.
pub const STABILITY_PASS: f64 = 1e-2;

/// Time layout of a stability run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityHorizon {
    /// `V̂` is the run started from `V̲(-start, ·)`
    pub start: f64,
    pub t_end: f64,
    pub interval: f64,
    /// keep every `keep_every`-th snapshot of `V̂` (0 keeps none)
    pub keep_every: usize,
}

#[derive(Debug, Clone)]
pub struct StabilityOutcome {
    pub report: StabilityReport,
    pub vhat: Vec<Field>,
}

/// Runs `V̂` (the Cauchy problem from `V̲(-n)`) together with a perturbed
/// solution started at `t = 0`, and records their distance at every
/// snapshot up to `t_end`. With `barriers`, also checks `u ≤ W⁺_δ` and the
/// envelope bound.
#[allow(clippy::too_many_arguments)]
pub fn stability_run(
    nl: &CombustionNonlinearity,
    cfg: &FrontConfiguration,
    profile: &WaveProfile,
    grid: &Grid,
    config: SolverConfig,
    barriers: Option<&Barriers>,
    horizon: &StabilityHorizon,
    pert: &PerturbationSpec,
) -> Result<StabilityOutcome> {
    let clock = Instant::now();
    let StabilityHorizon { start, t_end, interval, keep_every } = *horizon;
    if !(start >= 0.0) || !(t_end > 0.0) {
        return Err(invalid("start", "need start ≥ 0 and t_end > 0"));
    }
    if pert.height < 0.0 || pert.radius < 0.0 {
        return Err(Error::Inadmissible("bump height and radius must be nonnegative".into()));
    }
    let boundary = Boundary::resolve(config.boundary, cfg, profile, barriers)?;
    let mut base_stepper = Stepper::new(nl, grid, config, boundary, Some((cfg, profile)))?;
    let mut pert_stepper = Stepper::new(nl, grid, config, boundary, Some((cfg, profile)))?;
    let mut probe_stepper = Stepper::new(nl, grid, config, boundary, Some((cfg, profile)))?;
    let dt = base_stepper.dt();
    let pre = config.steps_in(start)?;
    let total = config.steps_in(t_end)?;
    let per = config.steps_in(interval)?;
    let t_of = |k: usize| -start + k as f64 * dt;

    let mut vhat = base_stepper.lower_field(-start)?;
    base_stepper.impose(&mut vhat)?;
    for k in 1..=pre {
        base_stepper.step_to(&mut vhat, t_of(k))?;
    }
    vhat.time = 0.0;

    // initial data
    let low0 = base_stepper.lower_field(0.0)?;
    let base = match pert.base {
        PerturbationBase::Entire => vhat.clone(),
        PerturbationBase::Lower => low0.clone(),
    };
    let center = bump_center(cfg, grid)?;
    let mut u = base.clone();
    for (p, v) in u.values.iter_mut().enumerate() {
        let r = dist(&grid.point(p), &center);
        if r < pert.radius {
            let s = 1.0 - (r / pert.radius).powi(2);
            *v += (pert.height * s * s).min(1.0 - *v).max(0.0);
        }
    }
    // admissible data lie above V̲(0) and decay in the weighted norm away from the ridge
    if u.min_diff(&low0).0 < -1e-14 {
        return Err(Error::Inadmissible("initial data dips below the lower barrier".into()));
    }
    let admissibility_ratio = decay_ratio(cfg, &u, &low0, pert)?;
    if admissibility_ratio > 0.1 {
        return Err(Error::Inadmissible(format!(
            "weighted tail ratio {admissibility_ratio:.3e} exceeds 0.1 beyond ridge distance {}",
            pert.rho0
        )));
    }

    let mut curve = Vec::new();
    let mut initial_below_w = None;
    let record = |u: &Field, vhat: &Field, probe: &mut Stepper<'_>, curve: &mut Vec<StabilityPoint>| -> Result<()> {
        let distance = u.max_abs_diff(vhat);
        let (above_w, envelope) = match barriers {
            Some(b) => {
                let w = time_barrier_field(b, grid, u.time)?;
                let above = (-w.min_diff(u).0).max(0.0);
                let p = b.params();
                let upper = upper_field(b, grid, b.varpi(u.time))?;
                let mut step = vhat.clone();
                probe.step_to(&mut step, vhat.time + dt)?;
                let rate = step.max_abs_diff(vhat) / dt;
                let env = p.delta * (-p.lambda * u.time).exp() + upper.max_abs_diff(vhat) + p.varrho * p.delta * rate;
                (Some(above), Some(env))
            }
            None => (None, None),
        };
        curve.push(StabilityPoint { t: u.time, distance, above_w, envelope });
        Ok(())
    };
    let mut kept = Vec::new();
    let mut snap = 0usize;
    let mut keep = |f: &Field, snap: usize| {
        if keep_every > 0 && snap % keep_every == 0 {
            kept.push(f.clone());
        }
    };
    keep(&vhat, snap);
    record(&u, &vhat, &mut probe_stepper, &mut curve)?;
    if let Some(a) = curve[0].above_w {
        initial_below_w = Some(a <= 1e-12);
    }
    for k in 1..=total {
        let t = k as f64 * dt;
        base_stepper.step_to(&mut vhat, t)?;
        pert_stepper.step_to(&mut u, t)?;
        if k % per == 0 || k == total {
            if u.values.iter().any(|v| !v.is_finite() || v.abs() > 2.0) {
                return Err(Error::BlowUp { t, value: u.max() });
            }
            record(&u, &vhat, &mut probe_stepper, &mut curve)?;
            snap += 1;
            keep(&vhat, snap);
        }
    }
    let final_distance = curve.last().map(|p| p.distance).unwrap_or(f64::NAN);
    let tail = &curve[curve.len() / 2..];
    let eventually_decreasing = tail.windows(2).all(|w| w[1].distance <= w[0].distance + 1e-12);
    let w_dominates = barriers.map(|_| curve.iter().all(|p| p.above_w.unwrap_or(0.0) <= 1e-12));
    let within_envelope = barriers.map(|_| curve.iter().all(|p| p.distance <= p.envelope.unwrap_or(f64::INFINITY)));
    let pass = final_distance <= STABILITY_PASS && eventually_decreasing && w_dominates.unwrap_or(true);
    let report = StabilityReport {
        curve,
        initial_below_w,
        admissibility_ratio,
        final_distance,
        eventually_decreasing,
        w_dominates,
        within_envelope,
        pass,
        runtime_s: clock.elapsed().as_secs_f64(),
    };
    Ok(StabilityOutcome { report, vhat: kept })
}

/// The ridge point at `t = 0` nearest to the grid centre.
fn bump_center(cfg: &FrontConfiguration, grid: &Grid) -> Result<Vec<f64>> {
    let mid: Vec<f64> = grid.origin().iter().zip(grid.extents()).map(|(o, e)| o + 0.5 * e).collect();
    if cfg.len() < 2 {
        // a single front: put the bump on the interface
        let m = grid.dim() - 1;
        return Ok(cfg.graph_point(0.0, &mid[..m]));
    }
    cfg.nearest_ridge_point(0.0, &mid)
}

fn decay_ratio(cfg: &FrontConfiguration, u0: &Field, low0: &Field, pert: &PerturbationSpec) -> Result<f64> {
    let g = &u0.grid;
    let far: Vec<usize> = (0..g.len())
        .filter(|p| {
            let z = g.point(*p);
            match cfg.spatial_distances(0.0, &z) {
                Ok((_, r)) => r > pert.rho0,
                Err(_) => false,
            }
        })
        .collect();
    if far.is_empty() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pert.seed);
    let mut worst = 0.0f64;
    for _ in 0..pert.samples {
        let p = far[rng.random_range(0..far.len())];
        let z = g.point(p);
        let m = cfg.min_scaled_q(0.0, &z).max(0.0);
        let w = (-pert.v * m).exp().min(1.0);
        worst = worst.max((u0.values[p] - low0.values[p]).abs() / w);
    }
    Ok(worst)
}
