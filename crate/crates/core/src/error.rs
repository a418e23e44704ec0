use thiserror::Error;

/// Errors produced by the model, sampler and post-processing layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MVN response requires every individual to share one time grid (individual {individual} differs)")]
    NonRectangularOutcomeForMvn { individual: usize },
    #[error("category {value} of covariate {covariate} for individual {individual} is outside 1..={max}")]
    CategoryOutOfRange {
        individual: usize,
        covariate: usize,
        value: usize,
        max: usize,
    },
    #[error("observation times of individual {individual} are not strictly increasing")]
    UnsortedTimes { individual: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("covariance matrix is not positive definite")]
    NonSpdCovariance,
    #[error("outcome scatter matrix is singular")]
    SingularScatter,
    #[error("Schur complement is not positive definite")]
    SingularSchurComplement,
    #[error("grid kernel matrix is singular")]
    SingularGridKernel,
    #[error("every component has zero mass for individual {individual}")]
    AllComponentsZeroMass { individual: usize },
    #[error("similarity matrix is degenerate (all entries identical)")]
    DegenerateSimilarity,
    #[error("cluster {0} of the final partition has no members")]
    EmptyFinalCluster(usize),
    #[error("no posterior draws available")]
    EmptyPosterior,
    #[error("invalid prediction grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
