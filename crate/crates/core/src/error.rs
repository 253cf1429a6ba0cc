use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The hypothesis pair violates mutual absolute continuity or has a
    /// non-positive divergence.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("observation {value} is outside the support of model `{model}`")]
    OutsideSupport { model: String, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical search failed: {0}")]
    NumericalSearch(String),

    /// An attack emitted a non-zero bias outside its declared support.
    #[error("inadmissible attack: bias on sensor {sensor} outside compromised set {support:?}")]
    Admissibility { sensor: usize, support: Vec<usize> },

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
