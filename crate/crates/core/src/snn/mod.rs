//! Spiking convolutional residual denoiser.
//!
//! Hidden units are LIF neurons simulated for `T` steps; training uses
//! surrogate-gradient backpropagation through time.

pub mod checkpoint;
pub mod config;
pub mod conv;
pub mod denoise;
pub mod network;
pub mod real;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{
    surrogate_derivative, Encoding, ExperimentConfig, NetworkConfig, Optimizer, Readout, SurrogateShape,
    SurrogateSpec, TrainConfig,
};
pub use denoise::{denoise_detailed, denoise_image, DenoiseOptions, Denoised};
pub use network::{
    backward_bptt, loss_residual_mse, ConvLayer, ForwardOptions, ForwardPass, ForwardRecord,
    Gradients, LayerRecord, SpikeMode, SpikingNetwork,
};
pub use real::Real;
pub use train::{prepare_patches, train, train_from, validation_noise_seed, validation_psnr, EpochLog, TrainOutcome};
