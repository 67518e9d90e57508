use thiserror::Error;

/// Errors raised by the numerical kernels and the probe pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("quadrature did not converge: estimate {estimate:.3e} above tolerance {tolerance:.3e} ({context})")]
    QuadratureNonConvergence {
        estimate: f64,
        tolerance: f64,
        context: &'static str,
    },

    #[error("evaluation point lies on the singular ray of the needle")]
    SingularRay,

    #[error("invalid geometry: {0}")]
    GeometryInvalid(String),

    #[error("boundary integral system is numerically singular (condition estimate {0:.3e})")]
    SolverSingular(f64),

    #[error("operators do not share a basis: {0}")]
    BasisMismatch(String),

    #[error("schedule search failed: tau exceeded {tau_max:.1e} at level {level}")]
    ScheduleFailure { level: usize, tau_max: f64 },
}

pub type Result<T> = std::result::Result<T, ProbeError>;
