//! Files, artifacts and the command-line driver around `idm-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod io;
