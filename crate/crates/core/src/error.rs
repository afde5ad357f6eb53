use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid span ({l}, {r}): spans need l < r")]
    InvalidSpan { l: usize, r: usize },
    #[error("word length must be at least 1 (word {index})")]
    InvalidWordLength { index: usize },
    #[error("spans do not form a partition of [0, {n})")]
    NotPartition { n: usize },
    #[error("empty tag sequence")]
    EmptyTags,
    #[error("unknown BIES tag {0:?}")]
    UnknownTag(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Format(String),
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing feature: {0}")]
    MissingFeature(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Neural(#[from] spanseg_neural::NeuralError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}
