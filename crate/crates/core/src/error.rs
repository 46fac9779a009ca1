use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or invalid experiment / model / weight configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two sample values collided in one column; ranks are undefined.
    #[error("tie detected in column {column} (t = {time}): value {value} occurs more than once")]
    Tie { column: usize, time: f64, value: f64 },

    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A declared bound or structural invariant did not hold.
    #[error("invariant violated at t = {t}, y = {y}: {what}")]
    Invariant { t: f64, y: f64, what: String },

    /// Adaptive quadrature stopped before reaching the requested tolerance.
    #[error("quadrature did not converge: {what} (achieved error {achieved:e}, requested {requested:e})")]
    Quadrature {
        what: String,
        achieved: f64,
        requested: f64,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures the CLI reports as numerical (exit status 3).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Tie { .. } | Error::Quadrature { .. } | Error::Invariant { .. }
        )
    }
}
