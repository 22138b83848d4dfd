//! Moving polytopes built from planar fronts.
//!
//! A configuration holds `n` unit directions `e_i = (ν_i cos θ_i, sin θ_i)`
//! written in the frame where the reference axis is the last coordinate,
//! shifts `τ_i` and the front speed `c`. Each front contributes the affine
//! form `q_i(t, z) = z·e_i - c t + τ_i`. The polytope is `{min_i q_i ≥ 0}`
//! (the unburned side), its boundary is the interface, and the ridges are
//! the pairwise intersections of facets.
//!
//! Distances are Euclidean. In space-time the forms `q_i` have gradient
//! `(-c, e_i)`, and with time frozen they have gradient `e_i`. In both cases
//! the nearest point of a facet or ridge is found exactly by enumerating
//! candidate active sets of constraints, projecting onto each affine set and
//! keeping the closest feasible projection.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::wave_profile::WaveProfile;

/// One planar front as it appears in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSpec {
    /// `ν_i`, a unit vector of length `N - 1` (a sign when `N = 2`).
    pub nu: Vec<f64>,
    /// Angle between the front and the reference hyperplane, in radians.
    pub theta: f64,
    #[serde(default)]
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontsSpec {
    pub dim: usize,
    pub fronts: Vec<FrontSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `min q < 0`: behind the interface, where `u` is close to 1.
    Burned,
    Interface,
    /// `min q > 0`: ahead of the interface, where `u` is close to 0.
    Unburned,
}

const INTERFACE_TOL: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FrontConfiguration {
    dim: usize,
    speed: f64,
    nu: Vec<Vec<f64>>,
    theta: Vec<f64>,
    tau: Vec<f64>,
    /// `e_i` in the rotated frame.
    dirs: Vec<Vec<f64>>,
}

impl FrontConfiguration {
    pub fn new(dim: usize, speed: f64, fronts: &[FrontSpec]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(invalid("dim", format!("must be 2 or 3, got {dim}")));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(invalid("speed", format!("must be positive, got {speed}")));
        }
        if fronts.is_empty() {
            return Err(invalid("fronts", "at least one front is required"));
        }
        let mut cfg = Self {
            dim,
            speed,
            nu: Vec::new(),
            theta: Vec::new(),
            tau: Vec::new(),
            dirs: Vec::new(),
        };
        for (i, f) in fronts.iter().enumerate() {
            if f.nu.len() != dim - 1 {
                return Err(Error::Dimension { expected: dim - 1, got: f.nu.len() });
            }
            let norm = f.nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(invalid("nu", format!("front {i}: |ν| = {norm}, expected 1")));
            }
            if !(f.theta > 0.0 && f.theta <= std::f64::consts::FRAC_PI_2 + 1e-15) {
                return Err(invalid("theta", format!("front {i}: must lie in (0, π/2], got {}", f.theta)));
            }
            if !f.tau.is_finite() {
                return Err(invalid("tau", format!("front {i}: not finite")));
            }
            let nu: Vec<f64> = f.nu.iter().map(|v| v / norm).collect();
            let (s, c) = f.theta.sin_cos();
            let mut e: Vec<f64> = nu.iter().map(|v| v * c).collect();
            e.push(s);
            for j in 0..i {
                if cfg.theta[j] == f.theta && cfg.nu[j] == nu {
                    return Err(invalid("fronts", format!("fronts {j} and {i} share a direction")));
                }
            }
            cfg.nu.push(nu);
            cfg.theta.push(f.theta);
            cfg.tau.push(f.tau);
            cfg.dirs.push(e);
        }
        Ok(cfg)
    }

    pub fn from_spec(spec: &FrontsSpec, speed: f64) -> Result<Self> {
        Self::new(spec.dim, speed, &spec.fronts)
    }

    /// Two fronts at angle `theta` symmetric about the axis (`ν = ±1`), both
    /// shifts zero.
    pub fn symmetric_v(speed: f64, theta: f64) -> Result<Self> {
        Self::new(
            2,
            speed,
            &[
                FrontSpec { nu: vec![1.0], theta, tau: 0.0 },
                FrontSpec { nu: vec![-1.0], theta, tau: 0.0 },
            ],
        )
    }

    /// A single front travelling along the axis.
    pub fn planar(dim: usize, speed: f64) -> Result<Self> {
        let mut nu = vec![0.0; dim.saturating_sub(1)];
        if let Some(first) = nu.first_mut() {
            *first = 1.0;
        }
        Self::new(dim, speed, &[FrontSpec { nu, theta: std::f64::consts::FRAC_PI_2, tau: 0.0 }])
    }

    pub fn spec(&self) -> FrontsSpec {
        FrontsSpec {
            dim: self.dim,
            fronts: (0..self.len())
                .map(|i| FrontSpec { nu: self.nu[i].clone(), theta: self.theta[i], tau: self.tau[i] })
                .collect(),
        }
    }

    /// Same fronts, shifts replaced.
    pub fn with_shifts(&self, tau: &[f64]) -> Result<Self> {
        if tau.len() != self.len() {
            return Err(Error::Dimension { expected: self.len(), got: tau.len() });
        }
        let mut spec = self.spec();
        for (f, t) in spec.fronts.iter_mut().zip(tau) {
            f.tau = *t;
        }
        Self::from_spec(&spec, self.speed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.dirs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
    pub fn speed(&self) -> f64 {
        self.speed
    }
    pub fn direction(&self, i: usize) -> &[f64] {
        &self.dirs[i]
    }
    pub fn nu(&self, i: usize) -> &[f64] {
        &self.nu[i]
    }
    pub fn theta(&self, i: usize) -> f64 {
        self.theta[i]
    }
    pub fn tau(&self, i: usize) -> f64 {
        self.tau[i]
    }
    pub fn min_sin_theta(&self) -> f64 {
        self.theta.iter().map(|t| t.sin()).fold(f64::INFINITY, f64::min)
    }
    /// `max_i |ν_i cot θ_i|`.
    pub fn max_slope(&self) -> f64 {
        self.theta.iter().map(|t| 1.0 / t.tan()).fold(0.0, f64::max)
    }

    #[inline]
    pub fn q(&self, i: usize, t: f64, z: &[f64]) -> f64 {
        let e = &self.dirs[i];
        let mut s = self.tau[i] - self.speed * t;
        for k in 0..self.dim {
            s += z[k] * e[k];
        }
        s
    }

    /// All `q_i` and the index of the smallest (lowest index on ties).
    pub fn q_values(&self, t: f64, z: &[f64]) -> Result<(Vec<f64>, usize)> {
        self.check_point(z)?;
        let q: Vec<f64> = (0..self.len()).map(|i| self.q(i, t, z)).collect();
        let arg = argmin(&q);
        Ok((q, arg))
    }

    /// `(min_i q_i, argmin)` without allocating.
    #[inline]
    pub fn min_q(&self, t: f64, z: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let q = self.q(i, t, z);
            if q < best.0 {
                best = (q, i);
            }
        }
        best
    }

    /// `min_i q_i / sin θ_i`, the vertical offset above the polytope graph.
    pub fn min_scaled_q(&self, t: f64, z: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| self.q(i, t, z) / self.theta[i].sin())
            .fold(f64::INFINITY, f64::min)
    }

    /// The mixture of planar fronts `max_i U(q_i) = U(min_i q_i)`.
    #[inline]
    pub fn subsolution_lower(&self, profile: &WaveProfile, t: f64, z: &[f64]) -> f64 {
        profile.eval(self.min_q(t, z).0)
    }

    pub fn classify_region(&self, t: f64, z: &[f64]) -> Region {
        let m = self.min_q(t, z).0;
        if m.abs() <= INTERFACE_TOL {
            Region::Interface
        } else if m < 0.0 {
            Region::Burned
        } else {
            Region::Unburned
        }
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: z.len() });
        }
        Ok(())
    }

    fn spacetime_constraints(&self) -> Constraints {
        Constraints {
            normals: self
                .dirs
                .iter()
                .map(|e| {
                    let mut a = vec![-self.speed];
                    a.extend_from_slice(e);
                    a
                })
                .collect(),
            offsets: self.tau.clone(),
        }
    }

    fn spatial_constraints(&self, t: f64) -> Constraints {
        Constraints {
            normals: self.dirs.clone(),
            offsets: self.tau.iter().map(|tau| tau - self.speed * t).collect(),
        }
    }

    /// Space-time distances `(d((t,z), ∂P), d((t,z), R))`. The ridge
    /// distance is infinite for a single front.
    pub fn distances(&self, t: f64, z: &[f64]) -> Result<(f64, f64)> {
        self.check_point(z)?;
        let mut x = vec![t];
        x.extend_from_slice(z);
        let c = self.spacetime_constraints();
        let ridge = if self.len() >= 2 { c.ridge_distance(&x).0 } else { f64::INFINITY };
        Ok((c.boundary_distance(&x), ridge))
    }

    /// Space-time distance to the ridge set; requires two fronts.
    pub fn ridge_distance(&self, t: f64, z: &[f64]) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::RidgeNeedsTwoFronts);
        }
        Ok(self.distances(t, z)?.1)
    }

    /// Distances within the time slice `t`: to the interface `Γ_t` and to
    /// the ridge set `R_t`.
    pub fn spatial_distances(&self, t: f64, z: &[f64]) -> Result<(f64, f64)> {
        self.check_point(z)?;
        let c = self.spatial_constraints(t);
        let ridge = if self.len() >= 2 { c.ridge_distance(z).0 } else { f64::INFINITY };
        Ok((c.boundary_distance(z), ridge))
    }

    /// The point of `R_t` nearest to `z`.
    pub fn nearest_ridge_point(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        if self.len() < 2 {
            return Err(Error::RidgeNeedsTwoFronts);
        }
        self.check_point(z)?;
        let (d, p) = self.spatial_constraints(t).ridge_distance(z);
        p.filter(|_| d.is_finite())
            .ok_or_else(|| Error::NotEnoughData("the ridge set of this configuration is empty".into()))
    }

    /// Spatial distance from `z` to the interface `Γ_t`.
    #[inline]
    pub fn interface_distance(&self, t: f64, z: &[f64]) -> f64 {
        self.spatial_constraints(t).boundary_distance(z)
    }

    /// Samples `count` points on `Γ_t ∩ box`, where the box is given by
    /// per-axis bounds over the first `N - 1` coordinates. Used by the mean
    /// speed estimate.
    pub fn sample_interface(&self, t: f64, lo: &[f64], hi: &[f64], count: usize) -> Vec<Vec<f64>> {
        // Γ_t is the graph y = max_i (c t - τ_i - x·ν_i cos θ_i) / sin θ_i.
        let m = self.dim - 1;
        let per_axis = if m == 1 { count } else { (count as f64).sqrt().ceil() as usize };
        let mut out = Vec::with_capacity(count);
        let mut idx = vec![0usize; m];
        loop {
            let x: Vec<f64> = (0..m)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (per_axis - 1).max(1) as f64)
                .collect();
            out.push(self.graph_point(t, &x));
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
        out
    }

    /// The interface point above the horizontal position `x`.
    pub fn graph_point(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let y = (0..self.len())
            .map(|i| {
                let (s, c) = self.theta[i].sin_cos();
                let dot: f64 = x.iter().zip(&self.nu[i]).map(|(a, b)| a * b).sum();
                (self.speed * t - self.tau[i] - dot * c) / s
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = x.to_vec();
        z.push(y);
        z
    }
}

fn argmin(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v < q[best] {
            best = i;
        }
    }
    best
}

/// A family of affine forms `g_i(x) = a_i·x + b_i`.
struct Constraints {
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
}

impl Constraints {
    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.normals[i].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + self.offsets[i]
    }

    fn feasible(&self, x: &[f64]) -> bool {
        (0..self.normals.len()).all(|i| self.value(i, x) >= -FEASIBILITY_TOL * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)))
    }

    /// Distance to `{min_i g_i = 0}`.
    fn boundary_distance(&self, x: &[f64]) -> f64 {
        let inside = (0..self.normals.len()).all(|i| self.value(i, x) >= 0.0);
        if inside {
            // nearest supporting hyperplane
            return (0..self.normals.len())
                .map(|i| self.value(i, x) / norm(&self.normals[i]))
                .fold(f64::INFINITY, f64::min);
        }
        self.closest_feasible(x, &[]).0
    }

    /// Distance to `∪_{i<j} {g_i = g_j = 0, min_k g_k ≥ 0}` and the nearest point.
    fn ridge_distance(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let n = self.normals.len();
        let mut best: (f64, Option<Vec<f64>>) = (f64::INFINITY, None);
        for i in 0..n {
            for j in i + 1..n {
                let cand = self.closest_feasible(x, &[i, j]);
                if cand.0 < best.0 {
                    best = cand;
                }
            }
        }
        best
    }

    /// Minimum distance over feasible projections onto `{g_s = 0, s ∈ S}`
    /// where `S` ranges over the index sets containing `required`.
    fn closest_feasible(&self, x: &[f64], required: &[usize]) -> (f64, Option<Vec<f64>>) {
        let n = self.normals.len();
        let dim = x.len();
        let others: Vec<usize> = (0..n).filter(|i| !required.contains(i)).collect();
        let mut best: (f64, Option<Vec<f64>>) = (f64::INFINITY, None);
        for mask in 0u64..(1u64 << others.len()) {
            let mut set: Vec<usize> = required.to_vec();
            set.extend(others.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, i)| *i));
            if set.is_empty() || set.len() > dim {
                continue;
            }
            if let Some(p) = self.project(x, &set) {
                if self.feasible(&p) {
                    let d = dist(x, &p);
                    if d < best.0 {
                        best = (d, Some(p));
                    }
                }
            }
        }
        best
    }

    /// Orthogonal projection of `x` onto `{g_s = 0, s ∈ set}`; `None` when
    /// the normals are linearly dependent.
    fn project(&self, x: &[f64], set: &[usize]) -> Option<Vec<f64>> {
        let k = set.len();
        // Gram system (A Aᵀ) λ = A x + b
        let mut m = vec![vec![0.0; k + 1]; k];
        for (r, &i) in set.iter().enumerate() {
            for (s, &j) in set.iter().enumerate() {
                m[r][s] = self.normals[i].iter().zip(&self.normals[j]).map(|(a, b)| a * b).sum();
            }
            m[r][k] = self.value(i, x);
        }
        let lambda = solve_dense(m)?;
        let mut p = x.to_vec();
        for (r, &i) in set.iter().enumerate() {
            for (pc, a) in p.iter_mut().zip(&self.normals[i]) {
                *pc -= lambda[r] * a;
            }
        }
        Some(p)
    }
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = m.len();
    let scale = m.iter().flat_map(|r| r[..k].iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            for c in col..=k {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][k] - s) / m[r][r];
    }
    Some(x)
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_3;

    const C: f64 = 0.2634;

    fn v() -> FrontConfiguration {
        FrontConfiguration::symmetric_v(C, FRAC_PI_3).unwrap()
    }

    #[test]
    fn single_front_q_and_time_shift() {
        let cfg = FrontConfiguration::planar(2, C).unwrap();
        let (q, arg) = cfg.q_values(0.0, &[0.0, 2.0]).unwrap();
        assert_close!(q[0], 2.0, 1e-15);
        assert_eq!(arg, 0);
        let (q2, _) = cfg.q_values(1.5, &[0.0, 2.0]).unwrap();
        assert_close!(q[0] - q2[0], 1.5 * C, 1e-15);
    }

    #[test]
    fn symmetric_axis_has_equal_q_and_lowest_index_wins() {
        let (q, arg) = v().q_values(3.0, &[0.0, 0.7]).unwrap();
        assert_eq!(q[0], q[1]);
        assert_eq!(arg, 0);
    }

    #[test]
    fn regions_follow_the_sign_of_min_q() {
        let cfg = FrontConfiguration::planar(2, C).unwrap();
        assert_eq!(cfg.classify_region(0.0, &[0.0, -3.0]), Region::Burned);
        assert_eq!(cfg.classify_region(0.0, &[0.0, 3.0]), Region::Unburned);
        assert_eq!(cfg.classify_region(0.0, &[5.0, 0.0]), Region::Interface);
    }

    #[test]
    fn apex_distances_vanish() {
        let (db, dr) = v().distances(0.0, &[0.0, 0.0]).unwrap();
        assert_close!(db, 0.0, 1e-14);
        assert_close!(dr, 0.0, 1e-14);
    }

    #[test]
    fn point_above_apex() {
        let s = FRAC_PI_3.sin();
        let dr = v().ridge_distance(0.0, &[0.0, 1.0]).unwrap();
        assert_close!(dr, 1.0 / (1.0 + (C / s).powi(2)).sqrt(), 1e-14);
    }

    #[test]
    fn planar_boundary_distance_in_spacetime() {
        let cfg = FrontConfiguration::planar(2, C).unwrap();
        for s in [-2.0, 0.5, 3.0] {
            let (db, dr) = cfg.distances(0.0, &[1.0, s]).unwrap();
            assert_close!(db, s.abs() / (1.0 + C * C).sqrt(), 1e-14);
            assert!(dr.is_infinite());
        }
        assert!(matches!(cfg.ridge_distance(0.0, &[0.0, 0.0]), Err(Error::RidgeNeedsTwoFronts)));
    }

    #[test]
    fn rejects_malformed_fronts() {
        assert!(FrontConfiguration::new(2, C, &[FrontSpec { nu: vec![0.5], theta: 1.0, tau: 0.0 }]).is_err());
        assert!(FrontConfiguration::new(2, C, &[FrontSpec { nu: vec![1.0], theta: 0.0, tau: 0.0 }]).is_err());
        assert!(FrontConfiguration::new(4, C, &[FrontSpec { nu: vec![1.0; 3], theta: 1.0, tau: 0.0 }]).is_err());
        let dup = FrontSpec { nu: vec![1.0], theta: 1.0, tau: 0.0 };
        assert!(FrontConfiguration::new(2, C, &[dup.clone(), dup]).is_err());
    }

    #[test]
    fn graph_points_lie_on_the_interface() {
        let cfg = v();
        for p in cfg.sample_interface(2.0, &[-10.0], &[10.0], 101) {
            assert!(cfg.min_q(2.0, &p).0.abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_ridge_point_of_v_is_the_apex() {
        let p = v().nearest_ridge_point(4.0, &[3.0, -1.0]).unwrap();
        assert_close!(p[0], 0.0, 1e-13);
        assert_close!(p[1], 4.0 * C / FRAC_PI_3.sin(), 1e-13);
    }
}
