use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("site {site} out of range for a {n}-site system (sites are 1-based)")]
    SiteOutOfRange { site: usize, n: usize },

    #[error(
        "{n_sites} sites exceed the configured maximum of {max} (set LREI_MAX_SITES to override)"
    )]
    DimensionOverflow { n_sites: usize, max: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),

    #[error("invalid low-rank state: {0}")]
    InvalidState(String),

    #[error("factor is rank deficient: Householder pivot of column {column} has norm {norm:e}")]
    RankDeficient { column: usize, norm: f64 },

    #[error("Lanczos did not converge after {restarts} restarts; best residuals {residuals:?}")]
    NoConvergence {
        restarts: usize,
        residuals: Vec<f64>,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite values in the factored state")]
    NonFinite,

    #[error("t_final / h = {ratio} is not an integer; multistep schemes need a uniform grid, adjust h or t_final")]
    NonUniformGrid { ratio: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {min_eig:e})")]
    NotPositiveSemidefinite { min_eig: f64 },

    #[error("dense path limited to dimension {max}, got {dim}")]
    SizeGuard { dim: usize, max: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage/step wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
