//! File formats, configuration, parallel sweeps and the command line for
//! `ratiosparse-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod sweep;

pub use error::{AppError, AppResult};
