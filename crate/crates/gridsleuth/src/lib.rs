//! Command-line pipeline around `gridsleuth-core`: file formats, ingest,
//! synthetic fixtures and the subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
