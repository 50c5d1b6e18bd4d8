use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("SPP dispersion pole: eps_metal + eps_dielectric = 0")]
    Pole,

    #[error("unreliable phase loop: {0}")]
    UnreliableLoop(String),

    #[error("degenerate helicity: no weight in the m = +1 and m = -1 channels")]
    DegenerateHelicity,

    #[error("insufficient fringes: found {found} maxima along the cut, need at least 3")]
    InsufficientFringes { found: usize },

    #[error("quadrature resolution: {0}")]
    Resolution(String),

    #[error("at delay {delay_fs} fs: {source}")]
    AtDelay {
        delay_fs: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures of a numerical method rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Resolution(_)
            | Error::UnreliableLoop(_)
            | Error::DegenerateHelicity
            | Error::InsufficientFringes { .. } => true,
            Error::AtDelay { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
