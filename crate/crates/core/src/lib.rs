//! Spike coding as quantization, and spiking residual denoising.
//!
//! - [`lif`]: discrete-time leaky integrate-and-fire encoding of constant
//!   inputs, rate decoding, and the closed-form quantizer it induces.
//! - [`rate`]: Bernoulli (discrete Poisson) rate coding.
//! - [`image`]: grayscale image I/O, normalization, AWGN, PSNR and patches.
//! - [`codec`]: whole-image encode/decode, activity and timestep sweeps.
//! - [`snn`]: convolutional spiking denoiser with surrogate-gradient BPTT.

pub mod codec;
pub mod error;
pub mod fmt;
pub mod image;
pub mod lif;
pub mod rate;
pub mod snn;

pub use error::{Error, Result};
pub use image::{ImageGray, NoiseSpec, Psnr};
pub use lif::{LifParams, MembraneTrace, QuantizerTable, SpikeTrain};
