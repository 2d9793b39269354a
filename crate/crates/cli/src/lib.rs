pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod traffic;

pub use error::{CliError, CliResult};
