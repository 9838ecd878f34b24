//! Stateless forward/backward kernels.
//!
//! Forward functions return whatever the matching backward needs (argmax
//! indices, normalized activations); nothing is cached behind the caller's
//! back. Max-type reductions break ties toward the first index everywhere.

mod activation;
mod conv;
mod gemm;
mod loss;
mod norm;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads};
pub use loss::{mse_loss, softmax, softmax_ce_loss};
pub use norm::{
    batchnorm2d_backward, batchnorm2d_infer, batchnorm2d_train, BatchNormCache, BatchNormGrads,
    BatchStats, BN_EPS, BN_MOMENTUM,
};
pub use pool::{
    concat_channels, global_horizontal_maxpool, global_horizontal_maxpool_backward, maxpool2d,
    maxpool2d_backward, split_channels, upsample_nearest, upsample_nearest_backward, ArgMax,
};
