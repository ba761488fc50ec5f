use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration input.
    #[error("config error: {0}")]
    Config(String),

    /// Model assumptions violated by otherwise well-formed input.
    #[error("validation error: {0}")]
    Validation(String),

    /// Cumulant evaluated outside its analyticity strip.
    #[error("cumulant domain error: |u| = {u} exceeds u_max = {u_max}")]
    CumulantDomain { u: f64, u_max: f64 },

    /// A numerical guard tripped during simulation.
    #[error("numerical guard: {0}")]
    Numerical(String),

    /// Price outside the no-arbitrage band; no implied volatility exists.
    #[error("no implied volatility: price {price} outside ({lower}, {upper})")]
    NoImpliedVol { price: f64, lower: f64, upper: f64 },

    #[error("cache refused: {0}")]
    CacheRefused(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Validation(_) | Error::CumulantDomain { .. } | Error::CacheRefused(_) => 3,
            Error::Numerical(_) | Error::NoImpliedVol { .. } => 4,
            Error::Index(_) | Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}
