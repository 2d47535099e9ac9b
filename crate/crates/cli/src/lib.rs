//! Command-line front end: file outputs and the live session service.

pub mod output;
pub mod server;
