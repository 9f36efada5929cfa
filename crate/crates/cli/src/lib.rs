//! Command line interface and review service.

pub mod cli;
pub mod server;
