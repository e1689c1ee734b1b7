//! Station front end: CLI subcommands, demo data and the review service.

pub mod commands;
pub mod demo;
pub mod server;
