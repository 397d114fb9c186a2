//! Configuration and pipeline stages behind the `focusmeter` binary.

pub mod config;
pub mod pipeline;
