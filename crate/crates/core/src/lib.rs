#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod pointcloud;
pub mod sampler;
pub mod splat;

pub use error::{Error, Result};
