use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no recorded fixture for prompt hash {hash}")]
    MissingFixture { hash: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("completion for {video_id} contained no parsable steps")]
    EmptySummary { video_id: String },

    #[error("no key steps survived clustering")]
    NoKeySteps,

    #[error("precondition cycle among key steps: {}", fmt_cycle(.cycle))]
    CyclicGraph { cycle: Vec<usize> },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures that originate in a model provider (remote or fixture).
    pub fn is_provider(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::MissingFixture { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

fn fmt_cycle(cycle: &[usize]) -> String {
    cycle.iter().map(|s| format!("k{s}")).collect::<Vec<_>>().join(" -> ")
}
