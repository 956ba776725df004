//! Orchestration for `levsim`: configuration, pipeline stages, acceptance checks.

pub mod acceptance;
pub mod config;
pub mod output;
pub mod pipeline;
