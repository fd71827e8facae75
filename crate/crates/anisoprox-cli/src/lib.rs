//! Library half of the command-line harness: dataset IO, experiment
//! configuration, synthetic generators, the batch runner, and the
//! invariant check suites. The binary in `main.rs` is a thin clap wrapper
//! over these modules.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod generate;
pub mod libsvm;
