//! HTTP consultation service and operator CLI for the `bayes-inquiry`
//! dialogue manager.
//!
//! [`consultation`] holds the greedy consultation state machine, [`server`]
//! exposes it over HTTP with per-session locking and idle expiry, and [`cli`]
//! implements the `inquiry` binary's subcommands.

pub mod cli;
pub mod consultation;
pub mod server;
