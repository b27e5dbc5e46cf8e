use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the turn-taking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid roster: {0}")]
    InvalidRoster(String),

    #[error("invalid conversation: {0}")]
    InvalidConversation(String),

    #[error("invalid scores: {0}")]
    InvalidScores(String),

    #[error("turn index {turn} out of range for conversation of length {len}")]
    TurnOutOfRange { turn: usize, len: usize },

    #[error("degenerate distribution: every speaking score is zero")]
    DegenerateDistribution,

    #[error("infinite loss at turn {turn}: observed speaker {speaker} has zero probability")]
    InfiniteLoss { turn: usize, speaker: usize },

    #[error("degenerate ratio: mean inherent score over the trait grid is zero")]
    DegenerateRatio,

    #[error("trait {0} outside the synthetic domain [0.1, 1]")]
    TraitOutOfDomain(f64),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("gradient shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{0}")]
    InvalidConfig(String),

    #[error("config {path}:{line}: {message}")]
    ConfigLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("nothing to fit: variant {0} has no learnable parameters")]
    NothingToFit(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("fit diverged at outer iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("missing ground-truth scores for group {0}")]
    MissingGroundTruth(u64),

    #[error("malformed data in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        // csv wraps io failures; surface those as plain i/o errors
        let path = path.into();
        if source.is_io_error() {
            match source.into_kind() {
                csv::ErrorKind::Io(e) => return Error::Io { path, source: e },
                _ => unreachable!(),
            }
        }
        Error::Csv { path, source }
    }

    /// True for failures of the numerical kind (divergence, degenerate
    /// probabilities, non-finite values).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDistribution
                | Error::InfiniteLoss { .. }
                | Error::DegenerateRatio
                | Error::NonFinite(_)
                | Error::Divergence { .. }
        )
    }

    /// True for file-system failures.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
