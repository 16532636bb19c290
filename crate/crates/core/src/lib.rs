// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod depth;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod hull;
pub mod io;
pub mod metrics;
pub mod pipeline;
mod par;
pub mod raster;
pub mod shapes;
pub mod spatial;
pub mod visibility;
