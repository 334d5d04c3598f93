use thiserror::Error;

/// Everything that can go wrong across the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("market has no buyers: bid matching probability is undefined")]
    EmptySide,

    #[error("validity probability vanishes ({side} side, standardized distance {z})")]
    VanishingValidity { side: &'static str, z: f64 },

    #[error("fixed-point equation has no root in the scanned interval (defect)")]
    NoFixedPoint,

    #[error("step size underflow at t = {t} (h = {h}); system is too stiff")]
    Stiff { t: f64, h: f64 },

    #[error("noise covariance singular beyond regularization floor")]
    IllConditioned,

    #[error("action minimizer did not converge after {iterations} iterations (best action {best})")]
    OptimizerFailure { best: f64, iterations: usize },

    #[error("no sign change of {what} in bracket [{lo}, {hi}]")]
    NoSignChange { what: &'static str, lo: f64, hi: f64 },

    #[error("peak weight {weight} outside [0, 1] at a switch point")]
    InconsistentSwitch { weight: f64 },

    #[error("no heterogeneous region at beta = {beta}")]
    EmptyWedge { beta: f64 },

    #[error("fixed-point count never reaches {target} over the alpha range")]
    MissingTransition { target: usize },

    #[error("the steady state is not homogeneous at pbar = {pbar} ({stable} stable fixed points)")]
    NotHomogeneous { pbar: f64, stable: usize },

    #[error("fixed point pair {0} not present at the requested aggregates")]
    MissingPeak(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptySide => "empty_side",
            Error::VanishingValidity { .. } => "vanishing_validity",
            Error::NoFixedPoint => "no_fixed_point",
            Error::Stiff { .. } => "stiff",
            Error::IllConditioned => "ill_conditioned",
            Error::OptimizerFailure { .. } => "optimizer_failure",
            Error::NoSignChange { .. } => "no_sign_change",
            Error::InconsistentSwitch { .. } => "inconsistent_switch",
            Error::EmptyWedge { .. } => "empty_wedge",
            Error::MissingTransition { .. } => "missing_transition",
            Error::NotHomogeneous { .. } => "not_homogeneous",
            Error::MissingPeak(_) => "missing_peak",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
