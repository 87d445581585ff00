use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fixed-point: {0}")]
    Fixed(#[from] crate::fxp::FxError),

    #[error("gradient code: {0}")]
    Coding(#[from] crate::coding::CodingError),

    #[error("secret sharing: {0}")]
    Secret(#[from] crate::secret::SecretError),

    #[error("data: {0}")]
    Data(#[from] crate::learning::DataError),

    #[error("latency model: {0}")]
    Latency(#[from] crate::latency::LatencyError),

    #[error("protocol: {0}")]
    Protocol(#[from] crate::protocols::ProtocolError),

    #[error("config: {0}")]
    Config(#[from] crate::harness::ConfigError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Fixed(_) => "fixed_point",
            Error::Coding(_) => "coding",
            Error::Secret(_) => "secret",
            Error::Data(_) => "data",
            Error::Latency(_) => "latency",
            Error::Protocol(_) => "protocol",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
