//! Command-line front end for `calred-core`: NPY/CSV/JSON artifacts, the
//! external denoiser process protocol and the `calred` binary's commands.

pub mod cli;
pub mod commands;
pub mod error;
pub mod external;
pub mod fsutil;
pub mod manifest;
pub mod npy;
pub mod tables;

pub use error::{exit, CliError};
