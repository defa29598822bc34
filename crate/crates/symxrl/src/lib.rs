//! Playground, file formats and command line for `symxrl-core`: a
//! multi-user MIMO scheduling simulator with a small TD agent, synthetic
//! slicing traces, the run configuration and the subcommands of the
//! `symxrl` binary.

pub mod agent;
pub mod commands;
pub mod config;
pub mod env;
pub mod experiment;
pub mod io;
pub mod synth;
