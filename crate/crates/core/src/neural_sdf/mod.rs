//! Learned gate field: depth encoder, positional-encoded SDF head,
//! auxiliary reconstruction decoder, two-stage training, and weight
//! persistence.

mod io;
mod layers;
mod model;
mod train;

/// Encoder output conditioning the SDF head.
pub type LatentCode = Vec<f64>;

pub use io::{load_weights, save_weights, WeightsError};
pub use layers::{huber, huber_grad, Adam, Conv2d, ConvT2d, Dense, TensorGrad};
pub use model::{
    mlp_backward, mlp_forward, DecoderWeights, EncoderWeights, GateSdfModel, MlpWeights, ModelGrads,
    NetConfig, NeuralDepthEncoder, NeuralSdfDecoder,
};
pub use train::{
    evaluate, train_stage1, train_stage2, write_history_csv, EpochStats, TrainConfig, TrainReport,
};
