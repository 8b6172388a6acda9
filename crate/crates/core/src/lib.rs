#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datapipe;
pub mod error;
pub mod evalstat;
pub mod flowmap;
pub mod model;
pub mod nn;
pub mod phantom;
pub mod seeds;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{build_model, count_params, ChannelGrowth, ModelSpec, Network};
pub use tensor::{Dims, Scalar, Tensor4};
