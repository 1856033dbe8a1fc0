use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("number of sites {0} is outside the supported range")]
    InvalidSites(usize),

    #[error("zero-magnetization sector needs an even number of sites, got {0}")]
    OddZeroMagnetization(usize),

    #[error("sector with {n_sites} sites has {size} configurations, beyond the enumeration budget")]
    EnumerationBudget { n_sites: usize, size: u64 },

    #[error("index {index} out of range for sector of size {size}")]
    IndexOutOfRange { index: usize, size: u64 },

    #[error("configuration {0} is not a member of the sector")]
    NotInSector(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("model '{name}' expects {expected} parameters, got {got}")]
    ParameterArity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("Hamiltonian connects {from} to {to}, which lies outside the sector")]
    SectorIncompatible { from: String, to: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear solve failed even after regularization escalation (lambda = {lambda})")]
    SingularUpdate { lambda: f64 },

    #[error("Lanczos did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("distribution has no weight")]
    DegenerateDistribution,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("epoch {epoch}: {source}")]
    AtEpoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_epoch(self, epoch: usize) -> Self {
        match self {
            e @ Error::AtEpoch { .. } => e,
            e => Error::AtEpoch {
                epoch,
                source: Box::new(e),
            },
        }
    }
}
