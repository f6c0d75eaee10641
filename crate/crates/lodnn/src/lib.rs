//! File formats, a rayon executor, the experiment harness and the
//! command-line front end for [`lodnn_core`].

pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod output;
pub mod study;

pub use error::{AppError, AppResult};
pub use exec::RayonExecutor;
