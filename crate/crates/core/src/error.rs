use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("validation error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { msg: String, line: Option<usize> },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("attack failed: {0}")]
    Attack(String),

    #[error("target selection failed: only {available} eligible nodes, {required} required")]
    Selection { available: usize, required: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation {
            msg: msg.into(),
            line: None,
        }
    }

    pub(crate) fn at_line(msg: impl Into<String>, line: usize) -> Self {
        Error::Validation {
            msg: msg.into(),
            line: Some(line),
        }
    }
}
