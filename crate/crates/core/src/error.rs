use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Truncation index too small for the requested tail tolerance.
    #[error("truncation at k_max={k_max} leaves tail mass {tail:e} above tolerance {tol:e}")]
    Truncation { k_max: usize, tail: f64, tol: f64 },

    /// A point lies on a branch endpoint of an iterate of the map.
    #[error("x={x} is a branch endpoint of T^{iterate}")]
    SingularPoint { x: f64, iterate: usize },

    #[error("map has no known invariant sampler; configure a burn-in")]
    NoStationarySampler,

    #[error("horizon {0} exceeds the supported maximum of 1e12 steps")]
    HorizonOverflow(f64),

    #[error("partition of T^{k} needs {needed} intervals, budget is {budget}")]
    PartitionBudget { k: usize, needed: u64, budget: u64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("alpha-hat sequence rejected: {0}")]
    AlphaSequence(String),

    #[error("too few bins for a chi-square test ({0} after merging)")]
    TooFewBins(usize),

    #[error("target has zero measure under the truncated symbol law")]
    ZeroMeasureTarget,

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
