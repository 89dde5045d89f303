use thiserror::Error;

/// Every failure an accounting call can report.
///
/// Variant names are stable; the CLI prints them verbatim on standard error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccountingError {
    #[error("step size {eta} must be strictly below {limit}")]
    StepsizeTooLarge { eta: f64, limit: f64 },

    #[error("{steps} mini-batches per epoch; at least 2 are required")]
    BatchCountTooSmall { steps: u64 },

    #[error("batch size {b} does not divide dataset size {n}; set truncate_last_batch to drop the remainder")]
    NonDividingBatch { n: u64, b: u64 },

    #[error("`{field}` must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },

    #[error("invalid loss regularity: {0}")]
    InvalidRegularity(String),

    #[error("batch index {index} outside [{lo}, {hi}]")]
    IndexOutOfRange { index: u64, lo: u64, hi: u64 },

    #[error("Rényi order must exceed 1, got {alpha}")]
    InvalidOrder { alpha: f64 },

    #[error("order {alpha} is not an integer >= 2")]
    NonIntegerOrder { alpha: f64 },

    #[error("this bound requires a {required} loss")]
    ClassMismatch { required: &'static str },

    #[error("mixture weights sum to {sum}, expected 1")]
    WeightsNotNormalized { sum: f64 },

    #[error("no RDP points supplied")]
    EmptyInput,

    #[error("delta must lie in (0, 1], got {delta}")]
    InvalidDelta { delta: f64 },

    #[error("no sigma in [{lo}, {hi}] reaches epsilon {target}")]
    Unsatisfiable { target: f64, lo: f64, hi: f64 },

    #[error("search bracket [{lo}, {hi}] is empty or nonpositive")]
    BracketTooNarrow { lo: f64, hi: f64 },

    #[error("log-domain carrier overflowed")]
    Overflow,

    #[error("differing record moves the gradient by {actual}, sensitivity allows {allowed}")]
    SensitivityViolated { actual: f64, allowed: f64 },

    #[error("malformed oracle instance: {0}")]
    InvalidInstance(String),

    #[error("exact divergence {exact} exceeds bound {bound}")]
    DominanceViolated { exact: f64, bound: f64 },

    #[error("{statistic}: empirical {empirical} vs expected {expected} ({z_score:.2} standard errors)")]
    StatisticalMismatch {
        statistic: &'static str,
        empirical: f64,
        expected: f64,
        z_score: f64,
    },

    #[error("unknown value `{value}` for {what}")]
    UnknownVariant { what: &'static str, value: String },
}

impl AccountingError {
    /// Variant name, used as a machine-readable error tag.
    pub fn name(&self) -> &'static str {
        match self {
            Self::StepsizeTooLarge { .. } => "StepsizeTooLarge",
            Self::BatchCountTooSmall { .. } => "BatchCountTooSmall",
            Self::NonDividingBatch { .. } => "NonDividingBatch",
            Self::NonPositive { .. } => "NonPositive",
            Self::InvalidRegularity(_) => "InvalidRegularity",
            Self::IndexOutOfRange { .. } => "IndexOutOfRange",
            Self::InvalidOrder { .. } => "InvalidOrder",
            Self::NonIntegerOrder { .. } => "NonIntegerOrder",
            Self::ClassMismatch { .. } => "ClassMismatch",
            Self::WeightsNotNormalized { .. } => "WeightsNotNormalized",
            Self::EmptyInput => "EmptyInput",
            Self::InvalidDelta { .. } => "InvalidDelta",
            Self::Unsatisfiable { .. } => "Unsatisfiable",
            Self::BracketTooNarrow { .. } => "BracketTooNarrow",
            Self::Overflow => "Overflow",
            Self::SensitivityViolated { .. } => "SensitivityViolated",
            Self::InvalidInstance(_) => "InvalidInstance",
            Self::DominanceViolated { .. } => "DominanceViolated",
            Self::StatisticalMismatch { .. } => "StatisticalMismatch",
            Self::UnknownVariant { .. } => "UnknownVariant",
        }
    }
}

pub type Result<T> = std::result::Result<T, AccountingError>;
