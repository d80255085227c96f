use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown subregion {index} (grid has {count})")]
    UnknownSubregion { index: usize, count: usize },

    #[error("inconsistent measurement: {0}")]
    Measurement(String),

    #[error("config file: {0}")]
    ConfigFile(#[from] toml::de::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
