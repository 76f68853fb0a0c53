//! Error type shared by all simulator modules.

use thiserror::Error;

/// Broad error categories used for process exit codes and machine-readable
/// reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    Numerical,
    Unsupported,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Numerical => "numerical",
            Category::Unsupported => "unsupported",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("route '{route}' is degenerate: total length {length_m} m is shorter than the update distance {update_m} m")]
    DegenerateRoute {
        route: String,
        length_m: f64,
        update_m: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("position ({x}, {y}) lies outside the correlated field region")]
    OutsideField { x: f64, y: f64 },

    #[error("path-loss model requires a 3-D distance of at least 1 m (got {0} m)")]
    DistanceBelowModelRange(f64),

    #[error("unsupported ray count {0}: expected 20 or an even count up to 20")]
    UnsupportedRayCount(usize),

    #[error("step displacement {displacement_m} m exceeds the 1 m evolution bound; reduce the update distance")]
    StepTooLarge { displacement_m: f64 },

    #[error("no -3 dB crossing found on the requested pattern cut")]
    NoHpbwCrossing,

    #[error("channel for UE {ue} is rank deficient: rank {rank} below the requested {requested} streams")]
    RankDeficient {
        ue: usize,
        rank: usize,
        requested: usize,
    },

    #[error("stacked effective channel is ill-conditioned: smallest singular value {smallest:e} against largest {largest:e}")]
    IllConditioned { smallest: f64, largest: f64 },

    #[error("block diagonalization infeasible for UE {ue}: M = {m} must be at least sum of other UEs' antennas ({interference}) plus {streams} streams")]
    BdInfeasible {
        ue: usize,
        m: usize,
        interference: usize,
        streams: usize,
    },

    #[error("generalized eigensolver failed: {0}")]
    EigFailure(String),

    #[error("cannot normalize an all-zero precoding matrix")]
    ZeroMatrix,

    #[error("empty record group: {0}")]
    EmptyGroup(String),

    #[error("at least two values are required to form an empirical CDF (got {0})")]
    TooFewValues(usize),

    #[error("the SC-II procedure is not implemented; use sc1 or none")]
    ScTwoUnimplemented,

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("step {step}, UE {ue}: {source}")]
    AtStep {
        step: usize,
        ue: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches trajectory context to an error bubbling out of a step.
    pub fn at_step(self, step: usize, ue: usize) -> Self {
        Error::AtStep {
            step,
            ue,
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::DegenerateRoute { .. } | Error::InvalidConfig(_) => Category::Config,
            Error::Io { .. } => Category::Io,
            Error::UnsupportedRayCount(_) | Error::ScTwoUnimplemented => Category::Unsupported,
            Error::AtStep { source, .. } => source.category(),
            _ => Category::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
