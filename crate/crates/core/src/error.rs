use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cholesky decomposition failed at pivot {index} (value {value:e})")]
    Decomposition { index: usize, value: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("near-singular matrix: eigenvalue {value:e} below floor {floor:e}")]
    NearSingular { value: f64, floor: f64 },

    #[error("degenerate variance at diagonal entry {index} (value {value:e})")]
    DegenerateVariance { index: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numerical failure at t={t}: {what}")]
    Numerical { what: String, t: usize },

    #[error("ARMS gave up after {rejections} rejections ({points} envelope points, domain [{lo}, {hi}])")]
    ArmsExhausted {
        rejections: usize,
        points: usize,
        lo: f64,
        hi: f64,
    },

    #[error("sweep {sweep}, block {block}: {source}")]
    Block {
        sweep: usize,
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn in_block(self, sweep: usize, block: &'static str) -> Error {
        Error::Block {
            sweep,
            block,
            source: Box::new(self),
        }
    }

    /// True for failures of the linear algebra or the floating point
    /// arithmetic, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Decomposition { .. }
            | Error::NotSpd(_)
            | Error::NearSingular { .. }
            | Error::DegenerateVariance { .. }
            | Error::NonFinite(_)
            | Error::Numerical { .. }
            | Error::ArmsExhausted { .. } => true,
            Error::Block { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
