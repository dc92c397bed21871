//! Command-line front end: run a query, build training data, train the
//! reward model, evaluate an annotated query file and manage
//! representative works.

pub mod commands;
pub mod config;
pub mod eval;
pub mod setup;

pub use commands::{execute, Cli};
pub use config::RunConfig;
pub use eval::{evaluate_suite, EvalReport, QueryLine};
