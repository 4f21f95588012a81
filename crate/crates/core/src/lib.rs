#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod harness;
pub mod io;
pub mod joint;
pub mod manifold;
pub(crate) mod par;
pub mod pipeline;
pub mod planner;
pub mod policy;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
