use thiserror::Error;

pub type Result<T> = std::result::Result<T, DpmError>;

#[derive(Debug, Error)]
pub enum DpmError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("label {label} out of range for {num_classes} classes (row {row})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("non-positive variance {value} at row {row}")]
    NonPositiveVariance { row: usize, value: f64 },

    #[error("row {row} has zero norm and cannot be normalized")]
    ZeroNorm { row: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training diverged in stage {stage} at epoch {epoch}: {components}")]
    Divergence {
        stage: u8,
        epoch: usize,
        components: String,
    },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DpmError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        DpmError::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        DpmError::Parse {
            line,
            message: message.into(),
        }
    }
}
