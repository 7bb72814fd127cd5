use thiserror::Error;

/// Errors raised by the numerical layers.
///
/// The split between `Validation` and the numerical variants mirrors the
/// process exit codes used by the command-line front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("superluminal velocity |v| = {speed}")]
    Superluminal { speed: f64 },
    #[error("support clipped: radius {radius} around {center:?} leaves the box of half-width {half_width}")]
    SupportClipped {
        radius: f64,
        center: [f64; 3],
        half_width: f64,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("blow-up detected at t = {time}")]
    BlowUp { time: f64 },
    #[error("outside projection neighborhood: residual {residual:e} after {iterations} iterations")]
    ProjectionFailed { iterations: usize, residual: f64 },
    #[error("superluminal iterate in projection: |v| = {speed}")]
    SuperluminalIterate { speed: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("quadrature did not converge: {what} (last relative change {change:e})")]
    Quadrature { what: String, change: f64 },
    #[error("wraparound bound violated: t = {time} exceeds {bound}")]
    Wraparound { time: f64, bound: f64 },
    #[error("non-convergent asymptotics: Cauchy estimate {estimate:e} above {threshold:e}")]
    NonConvergent { estimate: f64, threshold: f64 },
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("projection failed at t = {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParameter { .. }
            | Error::Superluminal { .. }
            | Error::SupportClipped { .. }
            | Error::GridMismatch(_)
            | Error::Wraparound { .. } => true,
            Error::AtTime { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
