//! Differentiable kernels for the UNet family. Every operation has an
//! explicit backward function; there is no general autodiff graph.

mod atsm;
mod conv;
mod ops;
mod tensor;

pub use atsm::{atsm, atsm_backward, atsm_i16, dynamic_channels};
pub(crate) use conv::for_each_run;
pub use conv::{conv, conv_backward, ConvGrads, ConvKind, ConvParams, KF};
pub use ops::{
    concat_channels, maxpool_f, maxpool_f_backward, relu, relu_backward, relu_in_place,
    split_channels, upsample_f, upsample_f_backward, PoolIndices,
};
pub use tensor::{Shape, Tensor};
