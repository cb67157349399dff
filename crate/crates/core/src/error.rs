use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("refused near-critical evaluation at u = {u} (certified error unattainable)")]
    NearCritical { u: f64 },

    #[error("state space has {size} states, limit is {limit}")]
    StateSpaceTooLarge { size: usize, limit: usize },

    #[error("generator is reducible: {0}")]
    Reducible(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
