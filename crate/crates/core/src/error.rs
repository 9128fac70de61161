use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive definite: Cholesky pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error(
        "characteristic matrix is rank deficient (column {column} is collinear with earlier columns); use a ridge penalty lambda > 0"
    )]
    RankDeficient { column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Diverged { epoch: usize, what: &'static str },

    #[error("degenerate series: {0}")]
    Degenerate(&'static str),

    #[error("stale cache: the model was modified after the forward pass")]
    StaleCache,
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        expected: impl core::fmt::Display,
        found: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// True for failures of the numerics (singular systems, divergence,
    /// degenerate statistics) as opposed to bad inputs or API misuse.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::RankDeficient { .. }
                | Error::Diverged { .. }
                | Error::Degenerate(_)
        )
    }
}
