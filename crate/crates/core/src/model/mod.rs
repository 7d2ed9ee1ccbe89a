//! The dual-encoder classifier: configuration, layers, forward pass,
//! parameter accounting and checkpoints.

pub mod checkpoint;
mod config;
pub mod layers;
mod network;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
};
pub use config::{EncoderConfig, InputMode, ModelConfig, DEFAULT_HIDDEN};
pub use network::{
    images_to_tensor, BoundModel, ForwardOutput, NamedParam, ParamGroup, Samm2dModel,
};
pub use params::{conv_params, linear_params, ParamTable};
