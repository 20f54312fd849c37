// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cauchy;
pub mod cli;
pub mod config;
pub mod error;
pub mod kernel;
pub mod manifest;
pub mod model;
pub mod quad;
pub mod roots;
pub mod spectral;
pub mod spreading;
pub mod waves;

pub use error::{Error, Result};
