use thiserror::Error;

/// Errors produced by fitting, score computation, and the multiverse layer.
#[derive(Error, Debug)]
pub enum Error {
    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("predictor of interest collinear with confounders")]
    CollinearInterest,

    #[error("model did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("need at least the identity plus one flip (B >= 2), got B = {0}")]
    TooFewFlips(usize),

    #[error("non-positive flip-conditional variance: design numerically degenerate")]
    DegenerateVariance,

    #[error("invalid family/link: {0}")]
    InvalidFamily(String),

    #[error("response outside the family's support: {0}")]
    InvalidResponse(String),

    #[error("invalid specification `{spec_id}`: {reason}")]
    InvalidSpec { spec_id: String, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("closed testing enumeration limited to K <= {max}, got K = {got}; use the step-down counting bound instead")]
    TooManyHypotheses { got: usize, max: usize },

    #[error("B-spline error: {0}")]
    Spline(String),

    #[error(
        "GLM bootstrap null responses do not remove the tested effect for non-identity links; \
         pass the unsafe override to proceed anyway"
    )]
    UnsafeGlmBootstrap,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
