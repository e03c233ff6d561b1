// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod operators;
pub mod output;
pub mod regpath;
pub mod scenario;
pub mod sampling;
pub mod schedule;
pub mod spaces;
pub mod suite;

pub use error::{Error, Result};
