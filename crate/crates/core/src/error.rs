use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every rule of the nonterminal has weight zero.
    #[error("cannot normalize rules of `{0}`: all weights are zero")]
    Normalization(String),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    /// The sentence has no derivation from the start symbol.
    #[error("no derivation{}", sentence_suffix(*.sentence))]
    NoParse { sentence: Option<usize> },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid grammar: {0}")]
    InvalidGrammar(String),

    /// A malformed line in one of the text formats.
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sentence_suffix(sentence: Option<usize>) -> String {
    match sentence {
        Some(i) => format!(" for sentence {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    /// Attaches a sentence index to a `NoParse` error.
    pub fn with_sentence(self, index: usize) -> Self {
        match self {
            Error::NoParse { .. } => Error::NoParse {
                sentence: Some(index),
            },
            other => other,
        }
    }
}
