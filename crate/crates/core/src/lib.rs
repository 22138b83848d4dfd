//! Numerical laboratory for polytope-like curved fronts of the combustion
//! reaction-diffusion equation `u_t - Δu = f(u)`.
//!
//! The pieces fit together as follows. A [`CombustionNonlinearity`] fixes
//! `f`; [`wave_profile`] shoots the planar front `(U, c_f)`; a
//! [`FrontConfiguration`] places `n` planar fronts to form a moving polytope;
//! [`ScaledSurface`] smooths the polytope into the implicit hypersurface used
//! by the explicit [`barriers`]; [`solver`] runs the finite-difference Cauchy
//! problems and the monotone entire-solution iteration; [`diagnostics`]
//! turns the results into measurable checks.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!(
            (a - b).abs() <= tol,
            "assert_close failed: {} = {a:e}, {} = {b:e}, |diff| = {:e} > {tol:e}",
            stringify!($a),
            stringify!($b),
            (a - b).abs()
        );
    }};
}

pub mod barriers;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod hypersurface;
pub mod jet;
pub mod nonlinearity;
pub mod ode;
pub mod snapshot;
pub mod solver;
pub mod wave_profile;

pub use barriers::{BarrierParams, Barriers, ValidationReport};
pub use error::{Error, Result};
pub use geometry::{FrontConfiguration, Region};
pub use hypersurface::ScaledSurface;
pub use nonlinearity::{CombustionNonlinearity, NonlinearityParams};
pub use solver::{Field, Grid, Scheme, SolverConfig};
pub use wave_profile::WaveProfile;
