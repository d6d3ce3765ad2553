//! Differentiable layer primitives. Each forward has a paired backward that
//! returns exact gradients given the upstream gradient.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod resize;

pub use activation::{relu, relu_backward};
pub use batchnorm::{
    batchnorm2d, batchnorm2d_backward, BatchNormCache, BatchNormGrads, BatchNormState, Mode, DEFAULT_EPS,
    DEFAULT_MOMENTUM,
};
pub use conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvGrads};
pub use linear::{linear, linear_backward, LinearGrads};
pub use resize::{bilinear_resize, bilinear_resize_backward};
