//! Differentiable 1-D primitives.
//!
//! Every operation is a pure forward transform paired with an exact
//! hand-derived backward transform. Nothing here knows about network
//! topology; [`crate::model`] composes these into the encoder–decoder.
//!
//! Tensors are [`FeatureMap`]s laid out as `batch × channels × time`,
//! contiguous in time. All reductions run in a fixed order, so results are
//! bit-reproducible for a given input and seed.

mod activation;
mod batchnorm;
mod conv;
mod merge;
mod noise;
mod pool;
mod tensor;

pub use activation::{leaky_relu, leaky_relu_backward, logistic_sigmoid, logistic_sigmoid_backward, sigmoid};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_forward_infer, batchnorm_forward_train,
    BatchNormCache, BatchNormGrads, BatchNormParams,
};
pub use conv::{conv1d_backward, conv1d_forward, ConvGrads, ConvParams};
pub use merge::{add_elementwise, add_elementwise_backward, concat_channels, concat_channels_backward, concat_many, split_channels};
pub use noise::gaussian_noise;
pub use pool::{max_pool, max_pool_backward, unpool_forward_fill, unpool_forward_fill_backward, PoolIndices};
pub use tensor::FeatureMap;

/// Whether an operation runs with training-time behaviour.
///
/// Gaussian noise is injected only in `Train`; batch normalization uses
/// mini-batch statistics in `Train` and running statistics in `Infer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}
