//! Configuration, snapshot and CSV formats.

pub mod config;
pub mod csv;
pub mod snapshot;
