use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] lodnn_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type AppResult<T> = Result<T, AppError>;

pub(crate) fn format_err(what: &'static str, msg: impl Into<String>) -> AppError {
    AppError::Format { what, msg: msg.into() }
}

pub(crate) fn config_err(field: impl Into<String>, msg: impl Into<String>) -> AppError {
    AppError::Config { field: field.into(), msg: msg.into() }
}
