//! File formats, the benchmark harness and the `graphrqi` command line on top
//! of `graphrqi-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;

pub use error::{Error, Result};
