//! Command-line front end for `tempres-core`: sweep manifests, CSV and
//! JSON-lines output, and step-size reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod plan;
pub mod sweep;

pub use tempres_core as core;
