//! Independent correctness oracles.

pub mod fd_reference;
pub mod mms;
