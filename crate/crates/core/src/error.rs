use std::path::PathBuf;

/// Errors raised anywhere in the pre-training / fine-tuning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fully masked input: at least one patch must stay visible")]
    FullyMasked,

    #[error("no maskable tokens in record")]
    NothingToMask,

    #[error("empty masked set: {0}")]
    EmptyMaskedSet(&'static str),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("knowledge base error at line {line}: {reason}")]
    KnowledgeBase { line: usize, reason: String },

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("manifest error at line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint config fingerprint mismatch: file has {found}, expected {expected}")]
    FingerprintMismatch { found: String, expected: String },

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("non-finite loss value: {0}")]
    NonFinite(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("label {label} outside [0, {num_classes})")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("dataset verification failed:\n{0}")]
    Verification(String),

    #[error("schedule step {step} outside [0, {total}]")]
    StepOutOfRange { step: usize, total: usize },

    #[error("image error for {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Validation-type errors map to CLI exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse(_)
                | Error::InvalidConfig { .. }
                | Error::UnknownLabel(_)
                | Error::KnowledgeBase { .. }
                | Error::Manifest { .. }
                | Error::CheckpointVersion { .. }
                | Error::FingerprintMismatch { .. }
                | Error::LabelOutOfRange { .. }
                | Error::Stratification(_)
        )
    }
}
