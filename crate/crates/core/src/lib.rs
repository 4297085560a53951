// Validation uses `!(x > 0.0)` style checks so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod embedstore;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod nn;
pub mod sgns;
pub mod synthetic;
pub mod textmat;

pub use error::{Error, Result};
