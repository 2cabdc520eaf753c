//! Residual encoder-decoder with skip connections, trained from scratch with
//! exact reverse-mode gradients.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod tensor;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, MAGIC, VERSION};
pub use layers::{zero_gradients, ConvSpec, Gradients, NodeId, NormSpec, ParamTensor, Tape, NORM_EPS};
pub use loss::{npcc, npcc_grad, npcc_grad_slice, npcc_slice};
pub use model::{
    build_phenn, check_params, forward_batch, infer, infer_with, Architecture, ConvNorm, DownBlock, InitRecord, NetworkConfig,
    NetworkParams, ResBlock, UpBlock,
};
pub use tensor::Tensor;
pub use train::{evaluate, train, EpochRecord, TrainConfig, TrainReport};
