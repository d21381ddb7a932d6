use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} is singular (min/max eigenvalue ratio {ratio:.3e})")]
    Singular { what: &'static str, ratio: f64 },

    #[error("normalized design is rank deficient (min/max singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("noise standard deviation at record {index} must be positive and finite, got {value}")]
    NonPositiveNoise { index: usize, value: f64 },

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("responses are required for {0}")]
    MissingResponses(&'static str),

    #[error("exact Shapley enumeration supports at most {max} records, got {n}")]
    TooManyRecords { n: usize, max: usize },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("noise model is not smooth at {point:?}: one-sided derivatives differ by {gap:.3e}")]
    NonSmoothNoise { point: Vec<f64>, gap: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("mechanism failed on grid point {index} (report {report:?}): {source}")]
    Mechanism {
        index: usize,
        report: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics themselves (singular matrices,
    /// rank deficiency, degenerate directions) as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        if let Error::Mechanism { source, .. } = self {
            return source.is_numeric();
        }
        matches!(
            self,
            Error::Singular { .. }
                | Error::RankDeficient { .. }
                | Error::DegenerateDirection(_)
                | Error::NonSmoothNoise { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
