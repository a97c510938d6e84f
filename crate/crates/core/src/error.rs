use serde::Serialize;
use thiserror::Error;

/// Pipeline phase an error originated in. Used to tag API and CLI errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Data,
    Model,
    Outcome,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Data => "data",
            Phase::Model => "model",
            Phase::Outcome => "outcome",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("cannot parse cell at row {row}, column `{column}`: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown level {value:?} for categorical feature `{feature}` (row {row})")]
    UnknownCategoryLevel {
        row: usize,
        feature: String,
        value: String,
    },
    #[error("value {value} of `{feature}` at row {row} lies outside the declared range")]
    ValueOutOfRange {
        row: usize,
        feature: String,
        value: f64,
    },
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("sensitive attribute `{0}` must be a categorical feature with exactly two levels")]
    NonBinarySensitive(String),
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature selection is empty")]
    EmptySelection,
    #[error("dataset has {0} rows; at most {max} are supported", max = crate::MAX_ROWS)]
    TooManyRows(usize),
    #[error("unknown dataset {0}")]
    UnknownDataset(u64),

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("h = {h} must be smaller than n = {n}")]
    HTooLarge { h: usize, n: usize },
    #[error("distance matrix is not a valid symmetric matrix: {0}")]
    DegenerateMatrix(String),

    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("training diverged: loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("design has {actual} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("sensitive attribute `{0}` must be excluded from the view for this model")]
    SensitiveFeatureInView(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
    #[error("no {0} pairs available")]
    NoPairs(&'static str),
    #[error("k = {k} outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("distribution kinds differ")]
    KindMismatch,
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("`{0}` is the sensitive attribute")]
    IsSensitiveAttribute(String),
    #[error("rerank probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("unknown run {0}")]
    UnknownRun(u64),
    #[error("unknown instance {0}")]
    UnknownInstance(usize),
    #[error("no runs requested")]
    NoRuns,
    #[error("distortion matrix is only served for n <= {max} (n = {n}); downsample first", max = crate::MAX_MATRIX_ROWS)]
    MatrixTooLarge { n: usize },
    #[error("state i/o failed: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code, used as `error_code` in API responses.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            MissingColumn(_) => "MissingColumn",
            UnparseableCell { .. } => "UnparseableCell",
            UnknownCategoryLevel { .. } => "UnknownCategoryLevel",
            ValueOutOfRange { .. } => "ValueOutOfRange",
            EmptyGroup(_) => "EmptyGroup",
            InvalidSchema(_) => "InvalidSchema",
            NonBinarySensitive(_) => "NonBinarySensitive",
            Csv(_) => "Csv",
            UnknownFeature(_) => "UnknownFeature",
            EmptySelection => "EmptySelection",
            TooManyRows(_) => "TooManyRows",
            UnknownDataset(_) => "UnknownDataset",
            SizeMismatch { .. } => "SizeMismatch",
            HTooLarge { .. } => "HTooLarge",
            DegenerateMatrix(_) => "DegenerateMatrix",
            SingleClassLabels => "SingleClassLabels",
            NonFiniteLoss(_) => "NonFiniteLoss",
            DimensionMismatch { .. } => "DimensionMismatch",
            SensitiveFeatureInView(_) => "SensitiveFeatureInView",
            InvalidConfig(_) => "InvalidConfig",
            InvalidRanking(_) => "InvalidRanking",
            NoPairs(_) => "NoPairs",
            InvalidK { .. } => "InvalidK",
            KindMismatch => "KindMismatch",
            EmptyDistribution => "EmptyDistribution",
            IsSensitiveAttribute(_) => "IsSensitiveAttribute",
            InvalidProbability(_) => "InvalidProbability",
            UnknownRun(_) => "UnknownRun",
            UnknownInstance(_) => "UnknownInstance",
            NoRuns => "NoRuns",
            MatrixTooLarge { .. } => "MatrixTooLarge",
            Io(_) => "Io",
        }
    }

    pub fn phase(&self) -> Phase {
        use Error::*;
        match self {
            MissingColumn(_)
            | UnparseableCell { .. }
            | UnknownCategoryLevel { .. }
            | ValueOutOfRange { .. }
            | EmptyGroup(_)
            | InvalidSchema(_)
            | NonBinarySensitive(_)
            | Csv(_)
            | UnknownFeature(_)
            | EmptySelection
            | TooManyRows(_)
            | UnknownDataset(_)
            | Io(_) => Phase::Data,
            SingleClassLabels
            | NonFiniteLoss(_)
            | DimensionMismatch { .. }
            | SensitiveFeatureInView(_)
            | InvalidConfig(_)
            | SizeMismatch { .. }
            | HTooLarge { .. }
            | DegenerateMatrix(_) => Phase::Model,
            _ => Phase::Outcome,
        }
    }

    /// True when the request itself is wrong (bad flag, unknown name, id or
    /// schema) rather than the pipeline failing on valid input.
    pub fn is_config(&self) -> bool {
        use Error::*;
        matches!(
            self,
            InvalidConfig(_)
                | InvalidK { .. }
                | HTooLarge { .. }
                | InvalidProbability(_)
                | UnknownFeature(_)
                | EmptySelection
                | SensitiveFeatureInView(_)
                | InvalidSchema(_)
                | UnknownDataset(_)
                | UnknownRun(_)
                | UnknownInstance(_)
                | NoRuns
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
