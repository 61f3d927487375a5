//! Std companion to `narrecall-core`: provider gateway, file formats, the
//! experiment service and the command-line pipeline.

pub mod cli;
pub mod clock;
pub mod commands;
pub mod config;
pub mod gateway;
pub mod io;
pub mod service;
