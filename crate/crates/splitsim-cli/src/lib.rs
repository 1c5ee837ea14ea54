//! Library surface of the experiment runner, so integration and acceptance
//! tests can drive the same code paths as the binary.

pub mod checkpoint;
pub mod config;
pub mod report;
pub mod runner;
