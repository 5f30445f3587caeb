//! Library surface of the experiment runner: strict config parsing, the
//! deterministic output writers, and the pipeline drivers. The `otoc`
//! binary is a thin argument-parsing shell over [`pipelines::run`].

pub mod config;
pub mod output;
pub mod pipelines;
