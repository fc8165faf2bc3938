use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the planning and verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataflow: {0}")]
    InvalidDag(String),

    #[error("cycle detected involving task `{0}`")]
    Cycle(String),

    #[error("no performance model for task kind `{0}`")]
    MissingModel(String),

    #[error("performance model `{0}` has no sample points")]
    EmptyModel(String),

    #[error("task unmodelable: first trial (1 thread, 1 tuple/sec) is unstable")]
    Unmodelable,

    #[error("stability check needs at least 2 samples past warm-up, got {0}")]
    ShortSeries(usize),

    #[error("insufficient resources for task `{task}`")]
    InsufficientResources { task: String },

    #[error("mapping still infeasible after {extra} extra slot(s): {source}")]
    RetryExhausted {
        extra: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Config(String),

    #[error("trial runner failed: {0}")]
    Runner(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
