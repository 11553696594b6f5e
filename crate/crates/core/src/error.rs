use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("design matrix is rank deficient; linearly dependent column(s): {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("objective is not finite at stencil point {point:?}")]
    NonFiniteObjective { point: Vec<f64> },

    #[error(
        "curvature of the negative log-likelihood is not positive definite \
         (eigenvalue {eigenvalue:.6e}, dominated by coefficient {coordinate})"
    )]
    IndefiniteCurvature { eigenvalue: f64, coordinate: usize },

    #[error("non-positive variance {value:.6e} for coefficient {coordinate}")]
    NonPositiveVariance { coordinate: usize, value: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid scenario:\n{}", .problems.join("\n"))]
    Scenario { problems: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteObjective { .. }
                | Error::IndefiniteCurvature { .. }
                | Error::NonPositiveVariance { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
