use alloc::string::String;
use alloc::vec::Vec;

use crate::model::ValidationIssue;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },
    #[error("dataset failed validation with {} issue(s)", .0.len())]
    Validation(Vec<ValidationIssue>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("functional undefined at t={t}: mixture survival below floor")]
    TailUndefined { t: f64 },
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { op, msg: msg.into() }
    }
}
