//! Command-line frontend for `fodelay`: document parsing and the
//! `analyze`, `synthesize`, `simulate`, `spectrum` and `verify` commands.
//!
//! Exit codes: 0 success, 1 usage/IO/schema error, 2 not certified,
//! 3 simulation diverged.

pub mod commands;
pub mod doc;

pub use commands::{run, Cli};
