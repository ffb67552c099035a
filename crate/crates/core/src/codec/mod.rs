//! Spherical scale-hyperprior image codec at desk scale.
//!
//! Rates are estimated cross-entropies in bits; there is no arithmetic
//! coder, so reported rates are a lower-bound proxy for a real bitstream.

mod arch;
mod entropy;
mod io;
mod model;
mod train;

pub use arch::{ArchConfig, Nonlinearity};
pub use entropy::{
    factorized_bits_var, gaussian_bits, gaussian_bits_var, lower_bound, quantize, FactorizedPrior, FactorizedVar,
    LIKELIHOOD_MIN, SIGMA_MIN,
};
pub use io::{decode_image, encode_image, Checkpoint, LatentFile, LATENT_MAGIC, MODEL_MAGIC};
pub use model::{BoundModel, CodecModel, ForwardOutput, Quantizer, TapedForward};
pub use train::{
    fixed_patch_set, load_dataset, synthetic_image, train, train_with, Adam, AdamConfig, DatasetConfig, LogRow, TrainConfig, TrainingLog,
};
