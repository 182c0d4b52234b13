//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by panel construction, estimation, and pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unbalanced panel: observation for unit `{unit}`{} at t={t} {kind}",
        region.as_ref().map(|r| format!(" region `{r}`")).unwrap_or_default())]
    UnbalancedPanel {
        unit: String,
        region: Option<String>,
        t: usize,
        /// "missing" or "duplicated".
        kind: &'static str,
    },

    #[error("non-numeric cell at row {row}, column `{col}`: `{value}`")]
    NonNumericCell { row: usize, col: String, value: String },

    #[error("negative count {value} at row {row}, column `{col}`")]
    NegativeCount { row: usize, col: String, value: f64 },

    #[error("negative input {value} at row {row}, column `{col}` (log1p requires values >= 0)")]
    NegativeInput { row: usize, col: String, value: f64 },

    #[error("empty key in column `{col}` at row {row}")]
    EmptyKey { row: usize, col: String },

    #[error("fixed-effect demeaning did not converge: residual cell mean {residual:.3e} after {sweeps} sweeps")]
    NoConvergence { residual: f64, sweeps: usize },

    #[error("design matrix is rank deficient; no identifiable columns remain (dropped: {0:?})")]
    RankDeficient(Vec<String>),

    #[error("too few clusters: {0} (need at least 2)")]
    TooFewClusters(usize),

    #[error("unit `{0}` has constant regressors; per-unit regression is degenerate")]
    DegenerateUnit(String),

    #[error("estimator did not converge after {iterations} iterations (last change {last_change:.3e})")]
    EstimatorNoConvergence { iterations: usize, last_change: f64 },

    #[error("perfect separation detected on regressor `{0}`")]
    Separation(String),

    #[error("outcome is identically zero; Poisson fit is undefined")]
    AllZeroOutcome,

    #[error("outcome has no variation above the censoring point")]
    NoVariation,

    #[error("event time {0} is outside the sample span")]
    EventOutsideSample(String),

    #[error("insufficient pre-period: need {needed} months before the event, have {available}")]
    InsufficientPrePeriod { needed: usize, available: usize },

    #[error("no treated units in the panel")]
    NoTreatedUnits,

    #[error("placebo draw requests {requested} treated units but the panel has {available}")]
    TooManyTreated { requested: usize, available: usize },

    #[error("both citation counts are zero; gap is undefined")]
    BothZero,

    #[error("gross share is zero; TreatRatio is undefined")]
    ZeroGrossShare,

    #[error("missing covariate `{col}` for field `{field}`")]
    MissingCovariate { field: String, col: String },

    #[error("missing pipeline artifact `{0}`")]
    MissingArtifact(String),

    #[error("stage `{stage}` failed: {source}")]
    StageFailed {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for configuration/input problems, 2 for
    /// estimation failures.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            MissingColumn(_) | UnbalancedPanel { .. } | NonNumericCell { .. }
            | NegativeCount { .. } | NegativeInput { .. } | EmptyKey { .. }
            | EventOutsideSample(_) | InsufficientPrePeriod { .. }
            | TooManyTreated { .. } | MissingCovariate { .. } | MissingArtifact(_)
            | InvalidConfig(_) | Io(_) | Csv(_) | Json(_) => 1,
            StageFailed { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
