//! Command-line and HTTP front ends over the copilot engine.

pub mod cli;
pub mod ops;
pub mod service;
