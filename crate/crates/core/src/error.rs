use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("parameter `{0}` is trainable but has no gradient")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    BadMagic {
        path: PathBuf,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported format version in {path}: file has {found}, reader supports {supported}")]
    Version {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("truncated file {path}: {context}")]
    Truncated { path: PathBuf, context: String },

    #[error("corrupt file {path}: {context}")]
    Corrupt { path: PathBuf, context: String },

    #[error("expert reached only {got} of {wanted} successful episodes in {attempts} attempts")]
    ExpertExhausted {
        got: usize,
        wanted: usize,
        attempts: usize,
    },

    #[error("unknown skill `{0}`")]
    UnknownSkill(String),

    #[error("skill `{0}` already owns prompt components")]
    SkillAlreadyOwned(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
