//! Library surface of the audit CLI: the run manifest, the stage runner,
//! and the report builder. The binary in `main.rs` is a thin argument
//! parser over these.

pub mod commands;
pub mod manifest;
pub mod ml1m;
pub mod report;
pub mod tables;

pub use commands::Runner;
pub use manifest::RunManifest;
