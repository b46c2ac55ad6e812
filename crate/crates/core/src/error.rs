use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty distribution")]
    EmptyDistribution,

    #[error("degenerate feature")]
    DegenerateFeature,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("non-scalar output with shape {0:?}")]
    NonScalar(Vec<usize>),

    #[error("split infeasible after {0} draws")]
    SplitInfeasible(usize),

    #[error("invalid synthetic config: {0}")]
    InvalidSynthetic(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("train-time unseen label (state {state}, object {object})")]
    TrainUnseenLabel { state: usize, object: usize },

    #[error("inconsistent target: candidate {candidate} is not (state {state}, object {object})")]
    InconsistentTarget {
        candidate: usize,
        state: usize,
        object: usize,
    },

    #[error("distribution {name} not normalized (sum {sum})")]
    NotNormalized { name: &'static str, sum: f64 },

    #[error("invalid fusion weights: {0}")]
    InvalidWeights(String),

    #[error("label not in candidate set (state {state}, object {object})")]
    LabelNotInCandidates { state: usize, object: usize },

    #[error("empty {0} partition")]
    EmptyPartition(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("missing checkpoint {0} and training is disabled")]
    MissingCheckpoint(PathBuf),

    #[error("branch mask {requested} is not available in a checkpoint trained with {trained}")]
    IncompatibleMask { requested: String, trained: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used for machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDistribution => "empty_distribution",
            Error::DegenerateFeature => "degenerate_feature",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Diverged(_) => "diverged",
            Error::NonScalar(_) => "non_scalar",
            Error::SplitInfeasible(_) => "split_infeasible",
            Error::InvalidSynthetic(_) => "invalid_synthetic",
            Error::Parse { .. } => "parse",
            Error::TrainUnseenLabel { .. } => "train_unseen_label",
            Error::InconsistentTarget { .. } => "inconsistent_target",
            Error::NotNormalized { .. } => "not_normalized",
            Error::InvalidWeights(_) => "invalid_weights",
            Error::LabelNotInCandidates { .. } => "label_not_in_candidates",
            Error::EmptyPartition(_) => "empty_partition",
            Error::Config(_) => "config",
            Error::Checkpoint { .. } => "checkpoint",
            Error::MissingCheckpoint(_) => "missing_checkpoint",
            Error::IncompatibleMask { .. } => "incompatible_mask",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
