//! Command-line front end: configuration, CSV output and subcommands.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command};
pub use config::RunConfig;

use crate::error::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::ConfigSection(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_NUMERIC,
    }
}
