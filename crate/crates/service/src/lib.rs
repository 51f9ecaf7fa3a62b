//! HTTP API and command-line front end over `logoped-core`.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
