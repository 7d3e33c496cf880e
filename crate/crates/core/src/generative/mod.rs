//! Autoencoder family over expression rows: plain AE, Gaussian VAE, and the
//! vector-quantized VAE whose latent is a concatenation of codebook vectors.

mod model;
mod quantize;
mod train;

pub use model::{
    LatentTable, LossBreakdown, LossNodes, LossWeights, Model, ModelConfig, ModelKind,
};
pub use quantize::{codebook_perplexity, nearest_code, posterior, quantize, Codebook};
pub use train::{train, CodebookUpdate, TrainConfig, TrainReport};
pub use train::initialize;
