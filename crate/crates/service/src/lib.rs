//! HTTP session service and command-line front end.

pub mod app;
pub mod cli;
