use std::sync::OnceLock;

use cfl_core::barriers::mollifier_omega;
use cfl_core::geometry::FrontSpec;
use cfl_core::hypersurface::flatness_from;
use cfl_core::snapshot::{read_snapshot, write_snapshot};
use cfl_core::{CombustionNonlinearity, Field, FrontConfiguration, Grid, ScaledSurface, WaveProfile};
use proptest::prelude::*;

fn profile() -> &'static WaveProfile {
    static P: OnceLock<WaveProfile> = OnceLock::new();
    P.get_or_init(|| WaveProfile::compute(&CombustionNonlinearity::new(0.3, 1.0, 2.0, 0.1).unwrap()).unwrap())
}

fn fronts() -> impl Strategy<Value = Vec<FrontSpec>> {
    prop::collection::vec((0.35f64..1.5, -3.0f64..3.0), 2..5).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (theta, tau))| FrontSpec { nu: vec![if k % 2 == 0 { 1.0 } else { -1.0 }], theta, tau })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reaction_vanishes_off_the_burning_range(theta in 0.05f64..0.9, a in 0.1f64..5.0, p in 2.0f64..4.0, u in -0.5f64..1.5) {
        let nl = CombustionNonlinearity::new(theta, a, p, 0.1).unwrap();
        let f = nl.f(u);
        if u <= theta || u == 1.0 {
            prop_assert_eq!(f, 0.0);
        } else if u > 1.0 {
            prop_assert!(f < 0.0);
        } else {
            prop_assert!(f > 0.0);
        }
    }

    #[test]
    fn profile_is_decreasing_and_inverts(d1 in -60.0f64..60.0, gap in 1e-3f64..5.0) {
        let p = profile();
        let (a, b) = (p.eval(d1), p.eval(d1 + gap));
        prop_assert!(a > b || (a == 1.0 && b == 1.0) || b == 0.0);
        if a > 1e-12 && a < 1.0 - 1e-9 {
            let back = p.inverse(a).unwrap();
            prop_assert!((back - d1).abs() < 1e-6, "inverse {back} vs {d1}");
        }
    }

    #[test]
    fn surface_lies_above_the_polytope(fr in fronts(), alpha in 0.05f64..3.0, t in -10.0f64..10.0, x in -20.0f64..20.0) {
        let cfg = FrontConfiguration::new(2, 0.26, &fr).unwrap();
        let s = ScaledSurface::new(cfg, alpha).unwrap();
        let pt = s.solve(t, &[x]).unwrap();
        prop_assert!(pt.residual.abs() <= 1e-12);
        prop_assert!(pt.phi >= pt.psi);
        let n = fr.len() as f64;
        let sin_min = fr.iter().map(|f| f.theta.sin()).fold(f64::INFINITY, f64::min);
        prop_assert!(pt.phi - pt.psi <= n.ln() / sin_min + 1e-12);
        let (h, h2) = flatness_from(&pt.weights);
        prop_assert!((h - h2).abs() <= 1e-12 && h >= -1e-15 && h <= 1.0);
    }

    #[test]
    fn mollifier_is_a_monotone_switch(s in -1.5f64..1.5) {
        let (w, dw, _) = mollifier_omega(s);
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!(dw >= 0.0);
        let (w_neg, _, _) = mollifier_omega(-s);
        prop_assert!((w + w_neg - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn snapshots_round_trip(nx in 16usize..40, ny in 16usize..40, dx in 1e-3f64..2.0, t in -50.0f64..50.0, seed in any::<u64>()) {
        let g = Grid::new(vec![nx, ny], dx, vec![-1.5, 2.0]).unwrap();
        let f = Field::from_fn(g, t, |z| ((z[0] * 12.9898 + z[1] * 78.233 + seed as f64 * 1e-9).sin() * 43758.5453).fract());
        let mut buf = Vec::new();
        write_snapshot(&f, &mut buf).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back.grid, f.grid);
        prop_assert_eq!(back.time.to_bits(), f.time.to_bits());
        prop_assert!(back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
