#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod closed_form;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod planner;
pub mod process;
pub mod quadrature;
pub mod random_system;
pub mod sim;
pub mod special;
pub mod system;
pub mod value;

pub use error::{Error, Result};
