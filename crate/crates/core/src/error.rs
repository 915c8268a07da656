use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinselError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is rank deficient: numerical rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("identifiability condition fails: {0}")]
    Identifiability(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LinselError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LinselError {
    LinselError::InvalidInput(msg.into())
}
