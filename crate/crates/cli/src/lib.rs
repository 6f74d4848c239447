//! Command-line front end: scenario files, CSV/SVG output and subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod io;
pub mod scenario;
pub mod svg;
