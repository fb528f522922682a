use std::path::PathBuf;

use crate::data::Split;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("unknown {kind} `{name}` in sample `{sample}`")]
    UnknownPrimitive {
        kind: &'static str,
        name: String,
        sample: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),

    #[error("split `{0}` has no samples")]
    EmptySplit(Split),

    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("{kind} id {id} out of range for size {size}")]
    OutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible synthetic dataset: {0}")]
    InfeasibleSynth(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("solution space is empty")]
    EmptySolutionSpace,

    #[error("ground-truth pair {0} is not in the solution space")]
    TruthOutsideSpace(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("sample `{0}` has no synthetic feature payload")]
    MissingPayload(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedManifest(_) => "E_MALFORMED",
            Error::UnknownPrimitive { .. } => "E_UNKNOWN_PRIMITIVE",
            Error::DuplicateSampleId(_) => "E_DUPLICATE_SAMPLE",
            Error::EmptySplit(_) => "E_EMPTY_SPLIT",
            Error::InvalidVocab(_) => "E_INVALID_VOCAB",
            Error::InvalidLabel(_) => "E_INVALID_LABEL",
            Error::OutOfRange { .. } => "E_OUT_OF_RANGE",
            Error::DimensionMismatch(_) => "E_DIMENSION",
            Error::InvalidConfig(_) => "E_CONFIG",
            Error::InfeasibleSynth(_) => "E_INFEASIBLE_SYNTH",
            Error::NumericFailure(_) => "E_NUMERIC",
            Error::EmptySolutionSpace => "E_EMPTY_SPACE",
            Error::TruthOutsideSpace(_) => "E_TRUTH_OUTSIDE_SPACE",
            Error::EmptyInput(_) => "E_EMPTY_INPUT",
            Error::MissingPayload(_) => "E_MISSING_PAYLOAD",
            Error::Unsupported(_) => "E_UNSUPPORTED",
            Error::Io { .. } => "E_IO",
            Error::Json(_) => "E_JSON",
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericFailure(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
