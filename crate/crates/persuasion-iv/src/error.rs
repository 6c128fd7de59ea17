//! Error type shared across the crate.
//!
//! Errors split into two families: *validation* errors (malformed input,
//! bad configuration) and *numerical* errors (identification guards,
//! solver failures). The CLI maps the former to exit code 1 and the
//! latter to exit code 2.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("invalid value in column `{column}`, data row {row}: {message}")]
    InvalidValue {
        column: String,
        row: usize,
        message: String,
    },

    #[error("empty sample: no data rows")]
    EmptySample,

    #[error("instrument arm z={0} is empty")]
    EmptyArm(u8),

    #[error("instrument level {0} not present in the sample")]
    MissingLevel(i64),

    #[error("instrument pair levels must differ (got {0} twice)")]
    EqualLevels(i64),

    #[error("instrument is not binary (levels {0:?}); restrict to a pair first")]
    NonBinaryInstrument(Vec<i64>),

    #[error("covariate index {0} out of range (sample has {1} covariates)")]
    CovariateOutOfRange(usize, usize),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("invalid cell specification: {0}")]
    InvalidCells(String),

    #[error("invalid distribution specification: {0}")]
    InvalidDgp(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("weak first stage: |denominator| = {value:.3e} is below the guard {guard:.1e}")]
    WeakFirstStage { value: f64, guard: f64 },

    #[error("zero-mass subpopulation: estimated conditioning mass {value:.3e} is below the guard {guard:.1e}")]
    ZeroMass { value: f64, guard: f64 },

    #[error(
        "degenerate baseline: E[Y | Z=0] = {0} leaves the approximated persuasion rate undefined"
    )]
    DegenerateBaseline(f64),

    #[error("non-positive variance {0:.3e} under the hypothesized ratio; the test statistic is undefined")]
    NonPositiveVariance(f64),

    #[error("degenerate inversion grid: {0}")]
    DegenerateGrid(String),

    #[error(
        "projected-gradient solver did not converge: residual {residual:.6e}, gradient norm {grad_norm:.6e} after {iterations} iterations"
    )]
    NonConvergence {
        residual: f64,
        grad_norm: f64,
        iterations: usize,
    },

    #[error("invalid subsample size b={b} for sample of n={n} (need 1 < b < n)")]
    InvalidSubsampleSize { b: usize, n: usize },

    #[error("subsample count must be at least 1")]
    InvalidSubsampleCount,

    #[error("sensitivity parameter {delta} outside the admissible interval [0, {max:.6}]")]
    InadmissibleDelta { delta: f64, max: f64 },
}

impl Error {
    /// Short machine-readable identifier used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::MissingColumn(_) => "missing_column",
            Error::InvalidValue { .. } => "invalid_value",
            Error::EmptySample => "empty_sample",
            Error::EmptyArm(_) => "empty_arm",
            Error::MissingLevel(_) => "missing_level",
            Error::EqualLevels(_) => "equal_levels",
            Error::NonBinaryInstrument(_) => "non_binary_instrument",
            Error::CovariateOutOfRange(..) => "covariate_out_of_range",
            Error::UnknownCovariate(_) => "unknown_covariate",
            Error::InvalidCells(_) => "invalid_cells",
            Error::InvalidDgp(_) => "invalid_dgp",
            Error::InvalidConfig(_) => "invalid_config",
            Error::WeakFirstStage { .. } => "weak_first_stage",
            Error::ZeroMass { .. } => "zero_mass",
            Error::DegenerateBaseline(_) => "degenerate_baseline",
            Error::NonPositiveVariance(_) => "non_positive_variance",
            Error::DegenerateGrid(_) => "degenerate_grid",
            Error::NonConvergence { .. } => "non_convergence",
            Error::InvalidSubsampleSize { .. } => "invalid_subsample_size",
            Error::InvalidSubsampleCount => "invalid_subsample_count",
            Error::InadmissibleDelta { .. } => "inadmissible_delta",
        }
    }

    /// Whether the error is numerical (exit code 2) rather than a
    /// validation failure (exit code 1).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::WeakFirstStage { .. }
                | Error::ZeroMass { .. }
                | Error::DegenerateBaseline(_)
                | Error::NonPositiveVariance(_)
                | Error::DegenerateGrid(_)
                | Error::NonConvergence { .. }
        )
    }
}
