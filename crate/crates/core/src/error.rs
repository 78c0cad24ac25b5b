use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A nonlinearity / density pair does not satisfy the standing assumptions.
    #[error("assumption violation: {0}")]
    AssumptionViolation(String),

    /// The identity map has no finite effective variance under infinite-variance noise.
    #[error("divergent effective variance: {0}")]
    DivergentVariance(String),

    /// The linearized dynamics matrix is not Hurwitz.
    #[error(
        "asymptotic dynamics matrix is unstable (spectral abscissa {abscissa:.6e} >= 0); \
         increase the innovation gain a"
    )]
    Unstable { abscissa: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// All validation problems found in a configuration, in document order.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
