//! JSON run configuration.
//!
//! Lengths and times in the `solver` and `experiment` blocks are read in
//! the unit chosen by `solver.units`: `absolute`, or `inverse-speed` where
//! a value `x` means `x / c_f` once the planar speed is known.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::barriers::{BarrierParams, SampleSpec};
use crate::diagnostics::PerturbationBase;
use crate::error::{Error, Result};
use crate::geometry::{FrontConfiguration, FrontsSpec};
use crate::nonlinearity::{CombustionNonlinearity, NonlinearityParams};
use crate::solver::{BoundaryPolicy, Grid, Scheme, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub nonlinearity: NonlinearityParams,
    pub front: FrontsSpec,
    #[serde(default)]
    pub barrier: BarrierBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

/// `"auto"` or explicit parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BarrierBlock {
    Auto(AutoTag),
    Explicit(BarrierParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for BarrierBlock {
    fn default() -> Self {
        BarrierBlock::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthUnits {
    Absolute,
    InverseSpeed,
}

/// A number or the string `"cfl"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeStep {
    Fixed(f64),
    Auto(CflTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CflTag {
    Cfl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub units: LengthUnits,
    pub dx: f64,
    pub dt: TimeStep,
    pub cfl_safety: f64,
    pub scheme: Scheme,
    pub boundary: BoundaryPolicy,
    /// cells per axis
    pub cells: Vec<usize>,
    /// box centre
    pub center: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub snapshot_interval: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            units: LengthUnits::InverseSpeed,
            dx: 0.1,
            dt: TimeStep::Auto(CflTag::Cfl),
            cfl_safety: 0.4,
            scheme: Scheme::ExplicitEuler,
            boundary: BoundaryPolicy::DirichletLower,
            cells: vec![512, 512],
            center: vec![0.0, 3.66],
            t_start: 0.0,
            t_end: 8.0,
            snapshot_interval: 0.25,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub surface: SurfaceExperiment,
    pub barriers: BarrierExperiment,
    pub entire: EntireExperiment,
    pub verify: VerifyExperiment,
    pub speed: SpeedExperiment,
    pub stability: StabilityExperiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceExperiment {
    /// surface scaling; the barrier `α` when absent
    pub alpha: Option<f64>,
    pub samples: usize,
    pub half_width: f64,
}

impl Default for SurfaceExperiment {
    fn default() -> Self {
        Self { alpha: None, samples: 100_000, half_width: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarrierExperiment {
    pub samples: usize,
    pub half_width: f64,
    pub eta_ahead: f64,
    pub eta_behind: f64,
}

impl Default for BarrierExperiment {
    fn default() -> Self {
        let s = SampleSpec::default();
        Self { samples: s.count, half_width: s.half_width, eta_ahead: s.eta_ahead, eta_behind: s.eta_behind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntireExperiment {
    pub starts: Vec<f64>,
    pub window: [f64; 2],
}

impl Default for EntireExperiment {
    fn default() -> Self {
        Self { starts: vec![2.0, 4.0, 8.0, 16.0], window: [0.0, 8.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyExperiment {
    pub eps: Vec<f64>,
    /// tube radii for `k̂(ρ)`
    pub radii: Vec<f64>,
    pub gap_bins: usize,
    pub gap_stride: usize,
    /// weight rate of the gap curve; `v⋆` of the schedule when absent
    pub gap_v: Option<f64>,
    /// snapshot times for the mean speed, spread over `[0, speed_horizon]`
    pub speed_horizon: f64,
    pub speed_times: usize,
    pub speed_samples: usize,
    pub speed_min_gap: f64,
}

impl Default for VerifyExperiment {
    fn default() -> Self {
        Self {
            eps: vec![0.5, 0.25, 0.1, 0.05, 0.01],
            radii: vec![2.0, 5.0, 10.0],
            gap_bins: 10,
            gap_stride: 2,
            gap_v: None,
            speed_horizon: 40.0,
            speed_times: 11,
            speed_samples: 10_000,
            speed_min_gap: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedExperiment {
    pub length: f64,
    pub dx: f64,
    pub cfl_safety: f64,
    pub tolerance: f64,
}

impl Default for SpeedExperiment {
    fn default() -> Self {
        Self { length: 200.0, dx: 0.15, cfl_safety: 0.4, tolerance: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityExperiment {
    pub base: PerturbationBase,
    /// bump height; `γ⋆/2` when absent
    pub height: Option<f64>,
    pub radius: f64,
    /// start of `V̂`
    pub start: f64,
    pub t_end: f64,
    pub rho0: f64,
    pub samples: usize,
    pub keep_every: usize,
}

impl Default for StabilityExperiment {
    fn default() -> Self {
        Self {
            base: PerturbationBase::Entire,
            height: None,
            radius: 3.0,
            start: 16.0,
            t_end: 40.0,
            rho0: 10.0,
            samples: 1000,
            keep_every: 4,
        }
    }
}

/// One field-level problem found by [`RunConfig::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Everything a run needs apart from the barrier schedule.
#[derive(Debug, Clone)]
pub struct Setup {
    pub nl: CombustionNonlinearity,
    pub speed: f64,
    pub cfg: FrontConfiguration,
    pub grid: Grid,
    pub solver: SolverConfig,
    /// `1/c_f` for `inverse-speed` units, else 1
    pub unit: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigErrors> {
        serde_json::from_str(text).map_err(|e| {
            ConfigErrors(vec![ConfigIssue { field: "<document>".into(), message: e.to_string() }])
        })
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigErrors(vec![ConfigIssue { field: "<file>".into(), message: format!("{}: {e}", path.display()) }])
        })?;
        Self::from_json(&text)
    }

    /// Checks every field against the invariants of the objects it feeds,
    /// collecting all problems.
    pub fn validate(&self) -> std::result::Result<(), ConfigErrors> {
        let mut issues = Vec::new();
        let mut push = |field: &str, message: String| issues.push(ConfigIssue { field: field.into(), message });
        let positive = |field: &str, v: f64, push: &mut dyn FnMut(&str, String)| {
            if !(v > 0.0 && v.is_finite()) {
                push(field, format!("must be positive and finite, got {v}"));
            }
        };

        let nl = CombustionNonlinearity::from_params(&self.nonlinearity);
        if let Err(e) = &nl {
            push("nonlinearity", e.to_string());
        }
        // the front check needs some speed; its sign is all that matters
        if let Err(e) = FrontConfiguration::from_spec(&self.front, 1.0) {
            push("front", e.to_string());
        }

        if let BarrierBlock::Explicit(p) = &self.barrier {
            for (name, v) in [
                ("barrier.epsilon", p.epsilon),
                ("barrier.alpha", p.alpha),
                ("barrier.beta", p.beta),
                ("barrier.delta", p.delta),
                ("barrier.lambda", p.lambda),
                ("barrier.varrho", p.varrho),
            ] {
                positive(name, v, &mut push);
            }
            if let Ok(nl) = &nl {
                if p.delta > nl.gamma_star() / 8.0 {
                    push("barrier.delta", format!("must not exceed γ⋆/8 = {}", nl.gamma_star() / 8.0));
                }
            }
        }

        let s = &self.solver;
        positive("solver.dx", s.dx, &mut push);
        positive("solver.snapshot_interval", s.snapshot_interval, &mut push);
        if !(s.cfl_safety > 0.0 && s.cfl_safety < 1.0) {
            push("solver.cfl_safety", format!("must lie in (0, 1), got {}", s.cfl_safety));
        }
        if let TimeStep::Fixed(dt) = s.dt {
            positive("solver.dt", dt, &mut push);
        }
        if s.cells.len() != self.front.dim {
            push("solver.cells", format!("needs {} entries, got {}", self.front.dim, s.cells.len()));
        }
        if s.cells.iter().any(|n| *n < crate::solver::MIN_CELLS) {
            push("solver.cells", format!("every axis needs at least {} cells", crate::solver::MIN_CELLS));
        }
        if s.center.len() != self.front.dim {
            push("solver.center", format!("needs {} entries, got {}", self.front.dim, s.center.len()));
        }
        if !(s.t_end > s.t_start) {
            push("solver.t_end", format!("must exceed solver.t_start = {}", s.t_start));
        }

        let x = &self.experiment;
        if x.surface.samples == 0 {
            push("experiment.surface.samples", "must be positive".into());
        }
        if let Some(a) = x.surface.alpha {
            positive("experiment.surface.alpha", a, &mut push);
        }
        positive("experiment.surface.half_width", x.surface.half_width, &mut push);
        if x.barriers.samples == 0 {
            push("experiment.barriers.samples", "must be positive".into());
        }
        positive("experiment.barriers.half_width", x.barriers.half_width, &mut push);
        positive("experiment.barriers.eta_ahead", x.barriers.eta_ahead, &mut push);
        positive("experiment.barriers.eta_behind", x.barriers.eta_behind, &mut push);
        if x.entire.starts.is_empty() || x.entire.starts.windows(2).any(|w| w[1] <= w[0]) || x.entire.starts[0] <= 0.0 {
            push("experiment.entire.starts", "must be positive and strictly increasing".into());
        }
        if x.entire.window[1] < x.entire.window[0] {
            push("experiment.entire.window", "end precedes start".into());
        }
        if x.verify.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            push("experiment.verify.eps", "entries must lie in (0, 1)".into());
        }
        if x.verify.radii.iter().any(|r| !(*r > 0.0)) {
            push("experiment.verify.radii", "entries must be positive".into());
        }
        if x.verify.gap_bins == 0 || x.verify.gap_stride == 0 {
            push("experiment.verify.gap_bins", "bins and stride must be positive".into());
        }
        if x.verify.speed_times < 2 || x.verify.speed_samples == 0 {
            push("experiment.verify.speed_times", "need at least two times and one sample".into());
        }
        positive("experiment.verify.speed_horizon", x.verify.speed_horizon, &mut push);
        positive("experiment.speed.length", x.speed.length, &mut push);
        positive("experiment.speed.dx", x.speed.dx, &mut push);
        positive("experiment.speed.tolerance", x.speed.tolerance, &mut push);
        if !(x.speed.cfl_safety > 0.0 && x.speed.cfl_safety < 1.0) {
            push("experiment.speed.cfl_safety", "must lie in (0, 1)".into());
        }
        if let Some(h) = x.stability.height {
            if !(h >= 0.0) {
                push("experiment.stability.height", format!("must be nonnegative, got {h}"));
            }
        }
        if !(x.stability.radius >= 0.0) {
            push("experiment.stability.radius", "must be nonnegative".into());
        }
        if !(x.stability.start >= 0.0) {
            push("experiment.stability.start", "must be nonnegative".into());
        }
        positive("experiment.stability.t_end", x.stability.t_end, &mut push);
        positive("experiment.stability.rho0", x.stability.rho0, &mut push);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(issues))
        }
    }

    /// Builds the nonlinearity, front configuration, grid and time step;
    /// `speed` is the planar speed (from the wave profile).
    pub fn setup(&self, speed: f64) -> Result<Setup> {
        self.validate().map_err(|e| Error::Format(format!("invalid configuration: {e}")))?;
        let nl = CombustionNonlinearity::from_params(&self.nonlinearity)?;
        let cfg = FrontConfiguration::from_spec(&self.front, speed)?;
        let s = &self.solver;
        let unit = self.unit(speed);
        let center: Vec<f64> = s.center.iter().map(|c| c * unit).collect();
        let grid = Grid::centered(s.cells.clone(), s.dx * unit, &center)?;
        let interval = s.snapshot_interval * unit;
        let solver = match s.dt {
            TimeStep::Auto(_) => SolverConfig::cfl(&grid, s.cfl_safety, interval, s.scheme, s.boundary)?,
            TimeStep::Fixed(dt) => {
                let c = SolverConfig {
                    dt,
                    scheme: s.scheme,
                    boundary: s.boundary,
                    cfl_safety: s.cfl_safety,
                    floor_lower: s.boundary != BoundaryPolicy::Frozen,
                };
                c.steps_in(interval)?;
                c
            }
        };
        solver.check(&grid, &nl)?;
        Ok(Setup { nl, speed, cfg, grid, solver, unit })
    }

    pub fn unit(&self, speed: f64) -> f64 {
        match self.solver.units {
            LengthUnits::Absolute => 1.0,
            LengthUnits::InverseSpeed => 1.0 / speed,
        }
    }

    pub fn sample_spec(&self, seed: u64) -> SampleSpec {
        let b = &self.experiment.barriers;
        SampleSpec {
            count: b.samples,
            half_width: b.half_width,
            eta_ahead: b.eta_ahead,
            eta_behind: b.eta_behind,
            seed,
            ..SampleSpec::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "nonlinearity": {"theta": 0.3, "amplitude": 1.0, "exponent": 2.0, "sigma": 0.1},
        "front": {"dim": 2, "fronts": [
            {"nu": [1.0], "theta": 1.0471975511965976},
            {"nu": [-1.0], "theta": 1.0471975511965976}
        ]}
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.barrier, BarrierBlock::Auto(AutoTag::Auto));
        c.validate().unwrap();
        let s = c.setup(0.2634).unwrap();
        assert_eq!(s.grid.counts(), &[512, 512]);
        assert_close!(s.grid.dx(), 0.1 / 0.2634, 1e-15);
        let per = s.solver.steps_in(0.25 / 0.2634).unwrap();
        assert!(per > 0);
    }

    #[test]
    fn explicit_barrier_and_round_trip() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.barrier = BarrierBlock::Explicit(BarrierParams {
            epsilon: 0.003,
            alpha: 10.0,
            beta: 0.001,
            delta: 0.003,
            lambda: 1e-6,
            varrho: 1e7,
        });
        c.solver.dt = TimeStep::Fixed(0.01);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }

    #[test]
    fn problems_are_reported_per_field() {
        assert!(RunConfig::from_json("{}").is_err());
        assert!(RunConfig::from_json(&MINIMAL.replace("\"sigma\"", "\"sigmaa\"")).is_err());
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.solver.dx = -1.0;
        c.solver.cells = vec![512];
        c.experiment.verify.eps = vec![1.5];
        c.nonlinearity.theta = 2.0;
        let e = c.validate().unwrap_err();
        let fields: Vec<&str> = e.0.iter().map(|i| i.field.as_str()).collect();
        for f in ["nonlinearity", "solver.dx", "solver.cells", "experiment.verify.eps"] {
            assert!(fields.contains(&f), "{fields:?}");
        }
    }

    #[test]
    fn auto_tags_parse() {
        let text = MINIMAL.replacen('{', r#"{"barrier": "auto", "solver": {"dt": "cfl", "units": "absolute", "dx": 0.5, "center": [0, 0], "t_end": 2, "snapshot_interval": 0.5},"#, 1);
        let c = RunConfig::from_json(&text).unwrap();
        assert_eq!(c.solver.units, LengthUnits::Absolute);
        assert!(RunConfig::from_json(&MINIMAL.replacen('{', r#"{"barrier": "manual","#, 1)).is_err());
    }
}
