//! The UNet family: configuration, construction, forward/backward passes,
//! cost accounting and serialization.

mod config;
mod cost;
pub(crate) mod io;
mod net;

pub use config::{
    Block, ModelConfig, Variant, DEFAULT_ENCODER_CHANNELS, DEFAULT_SHIFT_FRACTION,
    DEFAULT_STEM_CHANNELS, V2_WIDTH_FACTOR,
};
pub use cost::{
    conv_flops, conv_params, count_flops, count_flops_for, count_params, count_params_for,
};
pub use io::{decode_model, encode_model, load_model, payload_kind, save_model, Payload};
pub use net::{block_start, layer_plan, ForwardCache, LayerSpec, Model};
