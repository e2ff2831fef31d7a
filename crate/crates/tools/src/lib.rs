//! File formats, the parallel Monte Carlo driver and the `expectile` command
//! line on top of `expectile-core`.

pub mod cli;
pub mod commands;
pub mod config;
mod error;
pub mod io;
pub mod mc;
pub mod records;
pub mod returns;

pub use error::{Error, Result};
