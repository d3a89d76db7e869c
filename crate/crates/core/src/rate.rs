//! Rate coding: a value in `[0, 1]` is the per-timestep spike probability of
//! an independent Bernoulli process (the discrete-time stand-in for a Poisson
//! spike train).
//!
//! Every train is drawn from its own ChaCha8 stream selected by
//! `(seed, stream_index)`, so a pixel's train does not depend on the order in
//! which an image is encoded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lif::SpikeTrain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateCoderConfig {
    pub seed: u64,
    pub t_count: usize,
}

impl RateCoderConfig {
    pub fn new(seed: u64, t_count: usize) -> Result<Self> {
        if t_count == 0 {
            return Err(Error::invalid("T must be >= 1"));
        }
        Ok(RateCoderConfig { seed, t_count })
    }
}

/// RNG for one independent substream.
pub fn substream(seed: u64, stream_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

/// Encodes firing probability `p` as `T` independent Bernoulli draws.
pub fn encode_poisson(p: f64, cfg: &RateCoderConfig, stream_index: u64) -> Result<SpikeTrain> {
    let mut bits = Vec::with_capacity(cfg.t_count);
    encode_into(p, cfg, stream_index, &mut bits)?;
    SpikeTrain::new(bits)
}

/// Allocation-free variant of [`encode_poisson`]; clears and fills `bits`.
pub fn encode_into(
    p: f64,
    cfg: &RateCoderConfig,
    stream_index: u64,
    bits: &mut Vec<bool>,
) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("firing probability {p} outside [0, 1]")));
    }
    if cfg.t_count == 0 {
        return Err(Error::invalid("T must be >= 1"));
    }
    let mut rng = substream(cfg.seed, stream_index);
    bits.clear();
    bits.extend((0..cfg.t_count).map(|_| rng.gen_bool(p)));
    Ok(())
}
