// SPDX-License-Identifier: MIT OR Apache-2.0

//! # cbmw-cli
//!
//! The `cbmw` command-line workflow and the HTTP service. Artifacts live in
//! a workspace directory with `cohorts/`, `models/`, `reports/` and
//! `configs/`.

pub mod commands;
pub mod service;
pub mod workspace;

pub use commands::{run, Cli, Command};
pub use workspace::{Report, Workspace};
