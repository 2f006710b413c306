#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod cli;
pub mod cloud;
pub mod config;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod heap;
pub mod nn;
pub mod pointgnn;
pub mod prototypes;
pub mod scene;

pub use error::{Error, Result};
