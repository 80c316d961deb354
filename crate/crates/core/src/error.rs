use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid alignment: {0}")]
    GridAlignment(String),

    #[error("no implied volatility solution: {0}")]
    NoSolution(String),

    #[error("t = {t} outside quoted expiries [{lo}, {hi}] for tenor {tenor}, offset {offset}")]
    Extrapolation {
        t: f64,
        lo: f64,
        hi: f64,
        tenor: f64,
        offset: f64,
    },

    #[error("calibration infeasible at expiry {expiry}y, tenor {tenor}y, offset {offset}: {reason}")]
    CalibrationInfeasible {
        expiry: f64,
        tenor: f64,
        offset: f64,
        reason: String,
    },

    #[error("smile fit failed at calendar index {i}, maturity index {j}: {reason}")]
    SmileFit { i: usize, j: usize, reason: String },

    #[error("local volatility evaluation failed at calendar index {i}, maturity index {j}, x = {x}: {reason}")]
    LocalVol {
        i: usize,
        j: usize,
        x: f64,
        reason: String,
    },

    #[error("simulation stopped after {completed} of {requested} paths: {reason}")]
    PartialRun {
        completed: usize,
        requested: usize,
        reason: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
