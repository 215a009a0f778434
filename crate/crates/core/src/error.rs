use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("treebank parse error at line {line}: {message}")]
    TreebankSyntax { line: usize, message: String },

    #[error("closed-vocabulary violation: unknown {kind} label `{label}`")]
    ClosedVocabulary { kind: &'static str, label: String },

    #[error("not a complete parse: {0}")]
    NotACompleteParse(String),

    #[error("illegal parser action {action} in state {state}")]
    IllegalAction { action: String, state: String },

    #[error("malformed derivation: {0}")]
    MalformedDerivation(String),

    #[error("negative count weight {0}")]
    NegativeWeight(f64),

    #[error("context length {got} does not match model order {expected}")]
    ContextLength { expected: usize, got: usize },

    #[error("order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("search failure at word position {0}: every stack is empty")]
    SearchFailure(usize),

    #[error("vocabulary hash mismatch: {0} vs {1}")]
    VocabMismatch(String, String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
