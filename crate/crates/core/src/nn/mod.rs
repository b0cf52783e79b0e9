//! Minimal tensor and layer engine for the fixed autoencoder topology.
//!
//! Every differentiable op comes as a forward function plus an explicit
//! backward function; there is no general autograd graph. All ops are
//! single-threaded and deterministic.

mod activation;
mod adam;
mod conv;
mod pool;
mod tensor;

pub use activation::{leaky_relu, leaky_relu_backward, mse_loss, DEFAULT_LEAKY_SLOPE};
pub use adam::{adam_step, AdamConfig, AdamState, Param};
pub use conv::{
    conv1d, conv1d_backward, conv1d_transposed, conv1d_transposed_backward, iq_mix_conv2d,
    iq_mix_conv2d_backward, iq_unmix_conv2d_transposed, iq_unmix_conv2d_transposed_backward,
    ConvGrads,
};
pub use pool::{max_unpool, max_unpool_backward, maxpool, maxpool_backward, PoolIndices};
pub use tensor::Tensor;

pub(crate) use activation::leaky;
pub(crate) use conv::{conv_backward, conv_forward, convt_backward, convt_forward, ConvGeom};
pub(crate) use pool::{maxpool_into, unpool_backward_into, unpool_into};
