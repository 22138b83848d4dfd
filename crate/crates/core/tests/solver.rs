use std::f64::consts::FRAC_PI_3;

use cfl_core::solver::{
    entire_solution, solve_cauchy, Boundary, BoundaryPolicy, EntireSpec, LowerCache, Stepper,
};
use cfl_core::{CombustionNonlinearity, Field, FrontConfiguration, Grid, Scheme, SolverConfig, WaveProfile};

fn theta_03() -> (CombustionNonlinearity, WaveProfile) {
    let nl = CombustionNonlinearity::new(0.3, 1.0, 2.0, 0.1).unwrap();
    let p = WaveProfile::compute(&nl).unwrap();
    (nl, p)
}

fn no_floor(grid: &Grid, interval: f64, scheme: Scheme, boundary: BoundaryPolicy) -> SolverConfig {
    let mut c = SolverConfig::cfl(grid, 0.4, interval, scheme, boundary).unwrap();
    c.floor_lower = false;
    c
}

#[test]
fn planar_profile_translates_at_the_front_speed() {
    let (nl, prof) = theta_03();
    let c = prof.speed();
    let cfg = FrontConfiguration::planar(2, c).unwrap();
    let grid = Grid::centered(vec![16, 1200], 0.05 / c, &[0.0, 10.0 / c]).unwrap();
    let t_end = 20.0 / c;
    let config = no_floor(&grid, t_end / 4.0, Scheme::ExplicitEuler, BoundaryPolicy::DirichletExactPlanar);
    let mut st = Stepper::new(&nl, &grid, config, Boundary::ExactPlanar { cfg: &cfg, profile: &prof }, None).unwrap();
    let u0 = Field::from_fn(grid.clone(), 0.0, |z| prof.eval(cfg.q(0, 0.0, z)));
    let snaps = solve_cauchy(&mut st, u0, t_end, t_end / 4.0).unwrap();
    let last = snaps.last().unwrap();
    let exact = Field::from_fn(grid.clone(), last.time, |z| prof.eval(cfg.q(0, last.time, z)));
    let err = last.max_abs_diff(&exact);
    assert!(err <= 1e-3, "shape error {err:e}");
}

#[test]
fn first_member_equals_a_plain_cauchy_run() {
    let (nl, prof) = theta_03();
    let c = prof.speed();
    let cfg = FrontConfiguration::symmetric_v(c, FRAC_PI_3).unwrap();
    let grid = Grid::centered(vec![48, 40], 0.4 / c, &[0.0, 3.0 / c]).unwrap();
    let interval = 0.5 / c;
    let config = SolverConfig::cfl(&grid, 0.4, interval, Scheme::ExplicitEuler, BoundaryPolicy::DirichletLower).unwrap();
    let spec = EntireSpec { starts: vec![1.0 / c, 2.0 / c], window: [0.0, 2.0 / c], interval, keep_members: true };
    let ent = entire_solution(&nl, &cfg, &prof, &grid, config, None, &spec).unwrap();

    let mut st = Stepper::new(&nl, &grid, config, Boundary::Lower { cfg: &cfg, profile: &prof }, Some((&cfg, &prof))).unwrap();
    let mut u0 = st.lower_field(-1.0 / c).unwrap();
    st.impose(&mut u0).unwrap();
    let snaps = solve_cauchy(&mut st, u0, 2.0 / c, interval).unwrap();
    let window: Vec<&Field> = snaps.iter().filter(|f| f.time >= -1e-9).collect();
    assert_eq!(window.len(), ent.members[0].len());
    for (a, b) in window.iter().zip(&ent.members[0]) {
        assert!((a.time - b.time).abs() < 1e-9);
        assert!(a.max_abs_diff(b) <= 1e-12);
    }
    assert!(ent.report.monotone_ok);
    assert!(ent.report.min_time_derivative >= -1e-10);
    assert!(ent.report.max_range_violation <= 1e-12);
}

#[test]
fn ordered_data_stay_ordered() {
    let (nl, prof) = theta_03();
    let c = prof.speed();
    let cfg = FrontConfiguration::symmetric_v(c, 1.2).unwrap();
    let grid = Grid::centered(vec![40, 40], 0.5 / c, &[0.0, 0.0]).unwrap();
    let interval = 1.0 / c;
    let config = no_floor(&grid, interval, Scheme::Rk2, BoundaryPolicy::Frozen);
    let lc = LowerCache::new(&grid, &cfg, &prof).unwrap();
    let low = lc.field(&grid, 0.0);
    let mut high = low.clone();
    for (p, v) in high.values.iter_mut().enumerate() {
        *v = (*v + 0.2 * (0.3 * p as f64).sin().abs()).min(1.0);
    }
    let mut a = Stepper::new(&nl, &grid, config, Boundary::Frozen, None).unwrap();
    let mut b = Stepper::new(&nl, &grid, config, Boundary::Frozen, None).unwrap();
    let lo = solve_cauchy(&mut a, low, 4.0 / c, interval).unwrap();
    let hi = solve_cauchy(&mut b, high, 4.0 / c, interval).unwrap();
    for (l, h) in lo.iter().zip(&hi) {
        assert!(h.min_diff(l).0 >= -1e-14);
        assert!(l.range_violation() <= 1e-12 && h.range_violation() <= 1e-12);
    }
}

#[test]
fn single_front_entire_solution_is_the_planar_wave() {
    let (nl, prof) = theta_03();
    let c = prof.speed();
    let cfg = FrontConfiguration::planar(2, c).unwrap();
    let grid = Grid::centered(vec![24, 160], 0.1 / c, &[0.0, 2.0 / c]).unwrap();
    let interval = 1.0 / c;
    let config = no_floor(&grid, interval, Scheme::ExplicitEuler, BoundaryPolicy::DirichletLower);
    let spec = EntireSpec { starts: vec![2.0 / c, 4.0 / c], window: [0.0, 4.0 / c], interval, keep_members: true };
    let ent = entire_solution(&nl, &cfg, &prof, &grid, config, None, &spec).unwrap();
    for f in &ent.vhat {
        let exact = Field::from_fn(grid.clone(), f.time, |z| prof.eval(cfg.q(0, f.time, z)));
        assert!(f.max_abs_diff(&exact) <= 1e-3, "t = {}: {:e}", f.time, f.max_abs_diff(&exact));
    }
}

/// Three grids whose cell centres nest (`n`, `2n - 1`, `4n - 3` cells with a
/// common centre); differences between levels shrink like `dx²`.
#[test]
fn grid_refinement_is_second_order() {
    let (nl, prof) = theta_03();
    let c = prof.speed();
    let cfg = FrontConfiguration::symmetric_v(c, FRAC_PI_3).unwrap();
    let center = [0.0, 1.0 / c];
    let h = 0.4 / c;
    let n = 41;
    let interval = 1.0 / c;
    let t0 = -3.0 / c;
    let finals: Vec<Field> = (0..3)
        .map(|level| {
            let k = 1usize << level;
            let cells = k * (n - 1) + 1;
            let grid = Grid::centered(vec![cells, cells], h / k as f64, &center).unwrap();
            let config = no_floor(&grid, interval, Scheme::Rk2, BoundaryPolicy::DirichletLower);
            let mut st =
                Stepper::new(&nl, &grid, config, Boundary::Lower { cfg: &cfg, profile: &prof }, Some((&cfg, &prof)))
                    .unwrap();
            let mut u0 = st.lower_field(t0).unwrap();
            st.impose(&mut u0).unwrap();
            solve_cauchy(&mut st, u0, 1.0 / c, interval).unwrap().pop().unwrap()
        })
        .collect();
    // restrict to the coarse cells
    let restrict = |f: &Field, k: usize| -> Vec<f64> {
        let m = k * (n - 1) + 1;
        (0..n * n).map(|p| f.values[(p / n) * k * m + (p % n) * k]).collect()
    };
    let u0 = restrict(&finals[0], 1);
    let u1 = restrict(&finals[1], 2);
    let u2 = restrict(&finals[2], 4);
    let e1 = u0.iter().zip(&u1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let e2 = u1.iter().zip(&u2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let order = (e1 / e2).log2();
    assert!(order >= 1.8, "observed order {order:.3} (differences {e1:e}, {e2:e})");
}
