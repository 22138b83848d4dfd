use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("phase-plane trajectory collapsed (p <= 0) at U = {state:.6} for speed c = {speed:.6e}")]
    ShootingCollapse { speed: f64, state: f64 },

    #[error("no sign change of the shooting function in [{lo:.3e}, {hi:.3e}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("profile fit window too short: {0}; widen the domain")]
    FitWindow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ridge queries need at least two fronts")]
    RidgeNeedsTwoFronts,

    #[error("surface solve did not converge at (t = {t}, x = {x:?}): residual {residual:e}")]
    SurfaceSolve { t: f64, x: Vec<f64>, residual: f64 },

    #[error("time step {dt:e} violates the stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("solution blew up at t = {t}: |u| = {value}")]
    BlowUp { t: f64, value: f64 },

    #[error("front left the domain: {0}")]
    DomainTooShort(String),

    #[error("no propagating front: {0}")]
    NoFront(String),

    #[error("inadmissible initial perturbation: {0}")]
    Inadmissible(String),

    #[error("not enough data: {0}")]
    NotEnoughData(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
