use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the codec and simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A clip between two consecutive keyframes is longer than the configured maximum.
    #[error("clip span {start}..={end} has {len} frames, exceeding the maximum of {max}")]
    SpanTooLong {
        start: usize,
        end: usize,
        len: usize,
        max: usize,
    },

    /// Structured-text parse failure. `line`/`column` are 1-based when known.
    #[error("parse error at {}: field `{field}`: {message}", position(*.line, *.column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        field: String,
        message: String,
    },

    #[error("trajectory has {visible} visible points, at least 2 are required")]
    DegenerateTrajectory { visible: usize },

    #[error("value out of encodable range: {0}")]
    EncodeRange(String),

    #[error("bad stream format: {0}")]
    Format(String),

    #[error("stream truncated at byte offset {offset} while reading {what}")]
    Truncation { offset: usize, what: &'static str },

    #[error("corrupt stream at byte offset {offset}: {message}")]
    CorruptStream { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn position(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}"),
        (Some(l), None) => format!("line {l}"),
        _ => "unknown position".to_string(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Input errors map to exit code 2, violated internal invariants to 3.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::EncodeRange(_))
    }
}
