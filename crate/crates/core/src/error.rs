use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("n_c = {0} violates the protocol condition n_x = n_y = n_c < 1 (must lie in (0, 1))")]
    MeanPhotonNumber(f64),

    #[error("`{name}` = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },

    #[error("angle {0} deg is not one of the analyzer settings +45 / -45")]
    GuessAngle(f64),

    #[error("strategy {found:?} passed to the {expected} attack")]
    WrongStrategy {
        expected: &'static str,
        found: crate::adversary::EveKind,
    },

    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("sweep over `{0}` has no values")]
    EmptySweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of the filesystem or output encoders, as opposed to
    /// configuration or protocol errors.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Probability { name, value })
    }
}
