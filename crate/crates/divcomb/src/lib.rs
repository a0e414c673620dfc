//! File formats, configuration and the end-to-end pipeline around
//! `divcomb-core`.

pub mod config;
pub mod data;
pub mod error;
pub mod model_file;
pub mod pipeline;
pub mod store;

pub use error::{AppError, Result};
