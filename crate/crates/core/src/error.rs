use std::path::PathBuf;

/// Errors produced by the simulator, dataset, network, training and scanning layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("region error: {0}")]
    Region(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("spectrum undefined: image has no energy")]
    UndefinedSpectrum,

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("false-direction rate undefined: every record lies within {epsilon_um} um of the focal plane")]
    UndefinedDirection { epsilon_um: f64 },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        checkpoint: Box<crate::train::Checkpoint>,
    },

    #[error("model failure: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
