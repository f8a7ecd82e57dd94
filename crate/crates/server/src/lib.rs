//! HTTP chat service and command-line tools around the selftalk engine.

pub mod app;
pub mod cli;
pub mod config;
pub mod error;

pub use error::{ServerError, ServerResult};
