//! Numerical primitives for the volumetric model: convolutions, layer
//! normalization, activations, resizing, dense layers and fused losses.
//! Every differentiable op ships a matching reverse-mode gradient.

mod conv;
mod elementwise;
mod linear;
mod loss;
mod norm;
mod resize;

pub use conv::{
    conv3d, conv3d_backward, conv_output_extent, depthwise_conv3d, depthwise_conv3d_backward,
};
pub use elementwise::{gelu, gelu_backward, normal_cdf, softmax, softmax_backward};
pub use linear::{
    bias_add, bias_add_backward, concat_channels, concat_channels_backward, dot_const,
    global_avg_pool, global_avg_pool_backward, linear, linear_backward,
};
pub use loss::{
    cross_entropy, cross_entropy_backward, seg_cross_entropy, seg_cross_entropy_backward,
};
pub use norm::{layer_norm, layer_norm_backward};
pub use resize::{trilinear_resize, trilinear_resize_backward};
