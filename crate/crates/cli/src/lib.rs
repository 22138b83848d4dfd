//! Subcommands of the `cfl` binary. Each one reads a [`RunConfig`], writes
//! its artifacts into a fresh run directory, and finishes with a
//! `manifest.json` that lists every artifact with its SHA-256.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use cfl_core::barriers::{auto_schedule, BarrierKind, ScheduleOptions};
use cfl_core::config::{BarrierBlock, RunConfig, Setup};
use cfl_core::diagnostics::{
    extract_interface_and_meps, level_set_discrepancy, mean_speed_estimate, sandwich_and_monotonicity, stability_run,
    weighted_gap_report, PerturbationSpec, StabilityHorizon,
};
use cfl_core::hypersurface::SurfaceSample;
use cfl_core::solver::{entire_solution, run_with, Boundary, EntireSpec, SpeedOptions, Stepper};
use cfl_core::{snapshot, BarrierParams, Barriers, Field, ScaledSurface, WaveProfile};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Profile,
    Surface,
    BarriersValidate,
    Simulate,
    Entire,
    Verify,
    Speed,
    Stability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Surface => "surface",
            Command::BarriersValidate => "barriers-validate",
            Command::Simulate => "simulate",
            Command::Entire => "entire",
            Command::Verify => "verify",
            Command::Speed => "speed",
            Command::Stability => "stability",
        }
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Where a finished run put its outputs and whether its checks held.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub pass: bool,
    pub summary: String,
}

/// A numerical failure, with the run directory holding `failure.json`.
#[derive(Debug)]
pub struct NumericalFailure {
    pub dir: PathBuf,
    pub message: String,
}

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (diagnostics in {})", self.message, self.dir.join("failure.json").display())
    }
}

impl std::error::Error for NumericalFailure {}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configuration serializes");
    sha256_hex(&canonical)
}

struct RunDir {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    fn create(out: &Path, cmd: Command, hash: &str) -> Result<Self> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let base = format!("{}-{}-{stamp}", cmd.name(), &hash[..16]);
        let mut dir = out.join(&base);
        let mut k = 1;
        while dir.exists() {
            dir = out.join(format!("{base}-{k}"));
            k += 1;
        }
        fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, artifacts: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(fs::File::create(&p)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(fs::File::create(&p)?);
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()?;
        Ok(())
    }

    fn snapshot(&mut self, name: &str, f: &Field) -> Result<()> {
        let p = self.path(name);
        snapshot::save(f, &p)?;
        Ok(())
    }

    fn manifest(&self, header: serde_json::Value) -> Result<()> {
        let mut list = Vec::new();
        for a in &self.artifacts {
            let bytes = fs::read(self.dir.join(a))?;
            list.push(Artifact { path: a.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        }
        let mut doc = header;
        doc["artifacts"] = serde_json::to_value(list)?;
        let p = self.dir.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

/// Rechecks every checksum listed in `dir/manifest.json`.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let mut bad = Vec::new();
    for a in doc["artifacts"].as_array().context("manifest has no artifact list")? {
        let path = a["path"].as_str().context("artifact path")?;
        let want = a["sha256"].as_str().context("artifact checksum")?;
        match fs::read(dir.join(path)) {
            Ok(bytes) if sha256_hex(&bytes) == want => {}
            _ => bad.push(path.to_string()),
        }
    }
    Ok(bad)
}

struct RunContext<'a> {
    config: &'a RunConfig,
    setup: Setup,
    profile: WaveProfile,
    seed: u64,
}

impl RunContext<'_> {
    fn sched_options(&self) -> ScheduleOptions {
        ScheduleOptions { sample: self.config.sample_spec(self.seed), ..ScheduleOptions::default() }
    }

    /// Explicit parameters, or the auto schedule (also written to `rd`).
    fn barrier_params(&self, rd: &mut RunDir) -> Result<(BarrierParams, Option<f64>)> {
        match &self.config.barrier {
            BarrierBlock::Explicit(p) => Ok((*p, None)),
            BarrierBlock::Auto(_) => {
                let s = auto_schedule(&self.setup.cfg, &self.profile, &self.sched_options())?;
                rd.json("schedule.json", &s)?;
                Ok((s.params, Some(s.v_star)))
            }
        }
    }
}

/// Runs one subcommand. Configuration problems come back as
/// [`cfl_core::config::ConfigErrors`]; numerical problems as
/// [`NumericalFailure`].
pub fn run(cmd: Command, config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let hash = config_hash(config);
    let mut rd = RunDir::create(&opts.out, cmd, &hash)?;
    rd.json("config.json", config)?;
    let threads = rayon::current_num_threads();
    let result = dispatch(cmd, config, opts, &mut rd);
    let (pass, summary) = match result {
        Ok(v) => v,
        Err(e) => {
            let message = format!("{e:#}");
            fs::write(rd.dir.join("failure.json"), serde_json::to_string_pretty(&json!({ "error": message }))? + "\n")?;
            rd.artifacts.push("failure.json".into());
            rd.manifest(json!({
                "subcommand": cmd.name(), "config_hash": hash, "seed": opts.seed, "threads": threads,
                "version": env!("CARGO_PKG_VERSION"), "pass": false,
            }))?;
            return Err(NumericalFailure { dir: rd.dir, message }.into());
        }
    };
    rd.manifest(json!({
        "subcommand": cmd.name(), "config_hash": hash, "seed": opts.seed, "threads": threads,
        "version": env!("CARGO_PKG_VERSION"), "pass": pass, "summary": summary,
    }))?;
    Ok(RunOutcome { dir: rd.dir, pass, summary })
}

fn dispatch(cmd: Command, config: &RunConfig, opts: &RunOptions, rd: &mut RunDir) -> Result<(bool, String)> {
    let nl = cfl_core::CombustionNonlinearity::from_params(&config.nonlinearity)?;
    let profile = WaveProfile::compute(&nl)?;
    let setup = config.setup(profile.speed())?;
    let cx = RunContext { config, setup, profile, seed: opts.seed };
    match cmd {
        Command::Profile => profile_cmd(&cx, rd),
        Command::Surface => surface_cmd(&cx, rd),
        Command::BarriersValidate => barriers_cmd(&cx, rd),
        Command::Simulate => simulate_cmd(&cx, rd),
        Command::Entire => entire_cmd(&cx, rd, false),
        Command::Verify => entire_cmd(&cx, rd, true),
        Command::Speed => speed_cmd(&cx, rd),
        Command::Stability => stability_cmd(&cx, rd),
    }
}

fn profile_cmd(cx: &RunContext<'_>, rd: &mut RunDir) -> Result<(bool, String)> {
    let p = &cx.profile;
    p.write_csv(BufWriter::new(fs::File::create(rd.path("profile.csv"))?))?;
    let t = p.tail_rates();
    let residual = p.ode_residual_sup();
    let beta_rel = (t.beta0_fit - t.beta0).abs() / t.beta0;
    let pass = residual <= 1e-6 && beta_rel <= 0.01;
    rd.json(
        "profile.json",
        &json!({ "speed": p.speed(), "beta0": p.beta0(), "tails": t, "ode_residual_sup": residual, "beta0_fit_rel": beta_rel, "pass": pass }),
    )?;
    Ok((pass, format!("c_f = {:.6}, beta0 = {:.6}, ODE residual {residual:.2e}", p.speed(), p.beta0())))
}

fn surface_cmd(cx: &RunContext<'_>, rd: &mut RunDir) -> Result<(bool, String)> {
    let x = &cx.config.experiment.surface;
    let alpha = match (x.alpha, &cx.config.barrier) {
        (Some(a), _) => a,
        (None, BarrierBlock::Explicit(p)) => p.alpha,
        (None, BarrierBlock::Auto(_)) => 1.0,
    };
    let surf = ScaledSurface::new(cx.setup.cfg.clone(), alpha)?;
    let fit = surf.fit_constants(&SurfaceSample { count: x.samples, half_width: x.half_width, seed: cx.seed })?;
    let m = surf.horizontal_dim();
    let ts: Vec<f64> = (-4..=4).map(|k| k as f64 * x.half_width / 4.0).collect();
    let xs: Vec<Vec<f64>> = if m == 1 {
        (-40..=40).map(|k| vec![k as f64 * x.half_width / 40.0]).collect()
    } else {
        (-10..=10)
            .flat_map(|a| (-10..=10).map(move |b| vec![a as f64, b as f64]))
            .map(|v: Vec<f64>| v.iter().map(|c| c * x.half_width / 10.0).collect())
            .collect()
    };
    surf.write_samples_csv(BufWriter::new(fs::File::create(rd.path("surface.csv"))?), &ts, &xs)?;
    let pass = fit.max_residual <= 1e-12 && fit.psi_violations == 0 && fit.c_hat.is_finite();
    rd.json("surface.json", &json!({ "alpha": alpha, "fit": fit, "pass": pass }))?;
    Ok((pass, format!("residual {:.1e}, phi < psi at {} points, C_hat {:.4}", fit.max_residual, fit.psi_violations, fit.c_hat)))
}

fn barriers_cmd(cx: &RunContext<'_>, rd: &mut RunDir) -> Result<(bool, String)> {
    let (params, _) = cx.barrier_params(rd)?;
    let b = Barriers::new(&cx.setup.cfg, &cx.profile, params)?;
    let spec = cx.config.sample_spec(cx.seed);
    let up = b.validate(BarrierKind::Upper, &spec)?;
    let w = b.validate(BarrierKind::TimeShifted, &spec)?;
    rd.json("barriers.json", &json!({ "upper": up, "time_shifted": w }))?;
    let pass = up.pass && w.pass;
    Ok((pass, format!("min residual upper {:.3e}, time-shifted {:.3e}", up.min_residual, w.min_residual)))
}

fn simulate_cmd(cx: &RunContext<'_>, rd: &mut RunDir) -> Result<(bool, String)> {
    let s = &cx.setup;
    let sb = &cx.config.solver;
    let barriers = match sb.boundary {
        cfl_core::solver::BoundaryPolicy::DirichletUpper => {
            let (p, _) = cx.barrier_params(rd)?;
            Some(Barriers::new(&s.cfg, &cx.profile, p)?)
        }
        _ => None,
    };
    let boundary = Boundary::resolve(s.solver.boundary, &s.cfg, &cx.profile, barriers.as_ref())?;
    let mut st = Stepper::new(&s.nl, &s.grid, s.solver, boundary, Some((&s.cfg, &cx.profile)))?;
    let mut u0 = st.lower_field(sb.t_start * s.unit)?;
    st.impose(&mut u0)?;
    let mut k = 0usize;
    let mut range = 0.0f64;
    let mut below = 0.0f64;
    let mut names = Vec::new();
    let mut files = Vec::new();
    let lower = cfl_core::solver::LowerCache::new(&s.grid, &s.cfg, &cx.profile)?;
    run_with(&mut st, u0, sb.t_end * s.unit, sb.snapshot_interval * s.unit, |f| {
        range = range.max(f.range_violation());
        below = below.max(-f.min_diff(&lower.field(&f.grid, f.time)).0);
        let name = format!("snap_{k:05}.cflb");
        files.push((name.clone(), f.clone()));
        names.push((k, f.time, name));
        k += 1;
        Ok(())
    })?;
    for (name, f) in &files {
        rd.snapshot(name, f)?;
    }
    let mid: Vec<usize> = s.grid.counts().iter().map(|n| n / 2).collect();
    if let Some((_, last)) = files.last() {
        last.write_line_csv(BufWriter::new(fs::File::create(rd.path("final_line.csv"))?), &mid)?;
    }
    rd.csv("snapshots.csv", "index,t,file", names.iter().map(|(k, t, n)| format!("{k},{t:.17e},{n}")))?;
    let pass = range <= 1e-12 && below <= 1e-12;
    rd.json("simulate.json", &json!({ "snapshots": k, "range_violation": range, "lower_violation": below.max(0.0), "pass": pass }))?;
    Ok((pass, format!("{k} snapshots, range violation {range:.1e}")))
}

fn entire_cmd(cx: &RunContext<'_>, rd: &mut RunDir, verify: bool) -> Result<(bool, String)> {
    let s = &cx.setup;
    let u = s.unit;
    let x = &cx.config.experiment;
    let (params, v_star) = cx.barrier_params(rd)?;
    let b = Barriers::new(&s.cfg, &cx.profile, params)?;
    let interval = cx.config.solver.snapshot_interval * u;
    let spec = EntireSpec {
        starts: x.entire.starts.iter().map(|n| n * u).collect(),
        window: [x.entire.window[0] * u, x.entire.window[1] * u],
        interval,
        keep_members: true,
    };
    let ent = entire_solution(&s.nl, &s.cfg, &cx.profile, &s.grid, s.solver, Some(&b), &spec)?;
    let r = &ent.report;
    rd.json("entire.json", r)?;
    rd.csv(
        "increments.csv",
        "n_from,n_to,sup_increment",
        r.increments.iter().enumerate().map(|(k, v)| format!("{:.17e},{:.17e},{v:.17e}", spec.starts[k], spec.starts[k + 1])),
    )?;
    if let Some(last) = ent.vhat.last() {
        rd.snapshot("vhat_final.cflb", last)?;
    }
    let radii: Vec<f64> = x.verify.radii.iter().map(|r| r * u).collect();
    let traj: Vec<&[Field]> = ent.members.iter().map(|m| m.as_slice()).collect();
    let sw = sandwich_and_monotonicity(&s.cfg, &cx.profile, Some(&b), &traj, &ent.vhat_rate, &radii)?;
    rd.json("sandwich.json", &sw)?;
    let inc = &r.increments;
    let geometric = inc.len() < 3 || inc[inc.len() - 1] <= 2.0 * inc[inc.len() - 2];
    let entire_pass = r.monotone_ok
        && geometric
        && sw.tube_min_gap > 0.0
        && sw.tube_max < 1.0
        && sw.lower_violation == 0.0
        && r.max_range_violation <= 1e-12;
    if !verify {
        return Ok((entire_pass, format!("monotone {}, increments {:?}", r.monotone_ok, r.increments)));
    }

    let eps = &x.verify.eps;
    let mut meps_rows = Vec::new();
    let mut monotone = true;
    for f in &ent.vhat {
        let tab = extract_interface_and_meps(f, &s.cfg, eps)?;
        monotone &= tab.windows(2).all(|w| w[1].m >= w[0].m);
        meps_rows.extend(tab.iter().map(|m| format!("{:.17e},{},{:.17e},{}", f.time, m.eps, m.m, m.censored)));
    }
    rd.csv("meps.csv", "t,eps,m_eps,censored", meps_rows)?;

    let v = x.verify.gap_v.map(|v| v / u).or(v_star).unwrap_or(0.0);
    let last = ent.vhat.last().cloned().into_iter().collect::<Vec<_>>();
    let wg = weighted_gap_report(&last, &s.cfg, &cx.profile, v, x.verify.gap_bins, x.verify.gap_stride)?;
    rd.csv(
        "weighted_gap.csv",
        "lo,hi,sup_ratio,count",
        wg.bins.iter().map(|b| format!("{:.17e},{:.17e},{:.17e},{}", b.lo, b.hi, b.sup_ratio, b.count)),
    )?;

    let nt = x.verify.speed_times;
    let horizon = x.verify.speed_horizon * u;
    let times: Vec<f64> = (0..nt).map(|k| horizon * k as f64 / (nt - 1) as f64).collect();
    let m = s.grid.dim() - 1;
    let lo: Vec<f64> = s.grid.origin()[..m].to_vec();
    let hi: Vec<f64> = (0..m).map(|k| s.grid.origin()[k] + s.grid.extents()[k]).collect();
    let ms = mean_speed_estimate(&s.cfg, &times, &lo, &hi, x.verify.speed_samples, x.verify.speed_min_gap * u)?;
    rd.csv(
        "speed_pairs.csv",
        "t,s,distance,ratio",
        ms.pairs.iter().map(|p| format!("{:.17e},{:.17e},{:.17e},{:.17e}", p.t, p.s, p.distance, p.ratio)),
    )?;
    let level = level_set_discrepancy(&s.cfg, &ent.vhat, 0.5, 0.0).ok();
    rd.json("verify.json", &json!({ "meps_monotone": monotone, "mean_speed": ms, "weighted_gap": wg, "level_set": level }))?;
    let pass = entire_pass && monotone && ms.relative_error <= 0.02 && wg.pass;
    Ok((pass, format!("M_eps monotone {monotone}, mean speed rel {:.1e}, gap last {:.2e}", ms.relative_error, wg.last)))
}

fn speed_cmd(cx: &RunContext<'_>, rd: &mut RunDir) -> Result<(bool, String)> {
    let x = &cx.config.experiment.speed;
    let opts = SpeedOptions { length: x.length, dx: x.dx, cfl_safety: x.cfl_safety, ..SpeedOptions::default() };
    let m = cfl_core::solver::measure_speed_1d(&cx.setup.nl, &opts)?;
    let c = cx.profile.speed();
    let rel = (m.speed - c) / c;
    rd.csv("trajectory.csv", "t,position", m.trajectory.iter().map(|(t, z)| format!("{t:.17e},{z:.17e}")))?;
    let pass = rel.abs() <= x.tolerance;
    rd.json("speed.json", &json!({ "shooting": c, "measured": m.speed, "std_error": m.std_error, "relative_error": rel, "pass": pass }))?;
    Ok((pass, format!("shooting {c:.6}, measured {:.6} (rel {rel:+.2e})", m.speed)))
}

fn stability_cmd(cx: &RunContext<'_>, rd: &mut RunDir) -> Result<(bool, String)> {
    let s = &cx.setup;
    let u = s.unit;
    let x = &cx.config.experiment.stability;
    let (params, v_star) = cx.barrier_params(rd)?;
    let b = Barriers::new(&s.cfg, &cx.profile, params)?;
    let hz = StabilityHorizon {
        start: x.start * u,
        t_end: x.t_end * u,
        interval: cx.config.solver.snapshot_interval * u,
        keep_every: 0,
    };
    let pert = PerturbationSpec {
        base: x.base,
        height: x.height.unwrap_or(s.nl.gamma_star() / 2.0),
        radius: x.radius * u,
        rho0: x.rho0 * u,
        v: v_star.unwrap_or(0.0),
        samples: x.samples,
        seed: cx.seed,
    };
    let out = stability_run(&s.nl, &s.cfg, &cx.profile, &s.grid, s.solver, Some(&b), &hz, &pert)?;
    let r = &out.report;
    rd.csv(
        "stability.csv",
        "t,distance,above_w,envelope",
        r.curve.iter().map(|p| {
            format!("{:.17e},{:.17e},{:.17e},{:.17e}", p.t, p.distance, p.above_w.unwrap_or(f64::NAN), p.envelope.unwrap_or(f64::NAN))
        }),
    )?;
    rd.json("stability.json", r)?;
    Ok((r.pass, format!("distance {:.3e} at t = {:.3}, W dominates {:?}", r.final_distance, hz.t_end, r.w_dominates)))
}
