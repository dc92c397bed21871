//! Query planning and agent routing for multi-agent LLM systems.
//!
//! A meta-agent decomposes a query into a sub-task DAG ([`planner`]); a
//! reward model ([`reward`]) and per-agent representative works ([`works`])
//! decide whether each assignment is accepted, reassigned, replanned,
//! re-described or planned in more detail ([`orchestrator`]); a detector
//! ([`detector`]) checks completeness and non-redundancy; the executor runs
//! the DAG through pluggable agents.

pub mod detector;
pub mod error;
pub mod gateway;
pub mod orchestrator;
pub mod planner;
pub mod prompts;
pub mod reward;
pub mod works;

pub use error::{Error, Result};
