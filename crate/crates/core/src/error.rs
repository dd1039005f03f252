use thiserror::Error;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("weighted norm requested over an empty sample set")]
    EmptyField,

    #[error("angular quadrature degree {degree} too coarse for basis degree {max_degree} (need >= {required})")]
    QuadratureTooCoarse {
        degree: usize,
        max_degree: usize,
        required: usize,
    },

    #[error("divergence data has nonzero mean {mean:.3e} (relative {relative:.3e})")]
    IncompatibleMean { mean: f64, relative: f64 },

    #[error("divergence least-squares system breakdown (condition estimate {condition:.3e})")]
    SolverBreakdown { condition: f64 },

    #[error("Leray-Hopf bound {target} unreachable; smallest achieved ratio {achieved:.4e}")]
    EpsilonUnreachable { target: f64, achieved: f64 },

    #[error("basis Gram matrix near singular (condition estimate {condition:.3e})")]
    BasisDegenerate { condition: f64 },

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("Floquet resonance: I - Phi(T) singular (smallest singular value {min_singular:.3e})")]
    FloquetResonance { min_singular: f64 },

    #[error("pressure test space Gram matrix is singular")]
    PressureSpaceDegenerate,

    #[error("bilinear ratio undefined: zero S-norm in pair")]
    DegeneratePair,

    #[error("Picard map is not contracting (tail ratio {ratio:.3} >= 1)")]
    NoContraction { ratio: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations (last difference {last_difference:.3e})")]
    NotConverged {
        iterations: usize,
        last_difference: f64,
    },

    #[error("only {shells} sample shells available for decay fit (need >= 6)")]
    RayTooShort { shells: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("forcing inconsistent: |Div B - b| = {residual:.3e}")]
    InconsistentForcing { residual: f64 },

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InconsistentForcing { .. } => 1,
            Error::NoContraction { .. }
            | Error::FloquetResonance { .. }
            | Error::NotConverged { .. }
            | Error::EpsilonUnreachable { .. }
            | Error::BasisDegenerate { .. }
            | Error::SolverBreakdown { .. }
            | Error::PressureSpaceDegenerate => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
