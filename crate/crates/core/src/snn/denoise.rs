use rayon::prelude::*;

use super::network::{ForwardOptions, SpikingNetwork};
use super::real::Real;
use crate::error::{Error, Result};
use crate::image::ImageGray;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenoiseOptions {
    /// Side of the square output tile; 0 runs the whole image at once.
    pub tile: usize,
    /// Seed for the Bernoulli draws of the rate-coded variant.
    pub seed: u64,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        DenoiseOptions { tile: 96, seed: 0 }
    }
}

/// Result of running the network over a full image.
#[derive(Debug, Clone)]
pub struct Denoised {
    /// `noisy - residual`, same range as the input, not clipped.
    pub image: ImageGray,
    /// Residual in image units.
    pub residual: Vec<f64>,
    /// Mean spike count per neuron for every spiking layer.
    pub theta: Vec<f64>,
}

/// Denoises `noisy` as `noisy - R(noisy)`.
///
/// Large images are split into tiles. Each tile is padded with a margin equal
/// to the receptive radius, so only tile centres are kept and the result
/// matches a single whole-image pass for deterministic networks.
pub fn denoise_image<F: Real>(
    net: &SpikingNetwork<F>,
    noisy: &ImageGray,
    opts: &DenoiseOptions,
) -> Result<ImageGray> {
    Ok(denoise_detailed(net, noisy, opts)?.image)
}

pub fn denoise_detailed<F: Real>(
    net: &SpikingNetwork<F>,
    noisy: &ImageGray,
    opts: &DenoiseOptions,
) -> Result<Denoised> {
    net.check_finite()?;
    let (w, h) = (noisy.width(), noisy.height());
    let (lo, hi) = noisy.range();
    let span = hi - lo;
    let tile = if opts.tile == 0 { w.max(h) } else { opts.tile };
    let margin = net.config().receptive_radius();

    let mut tiles = Vec::new();
    for y0 in (0..h).step_by(tile) {
        for x0 in (0..w).step_by(tile) {
            tiles.push((x0, y0, tile.min(w - x0), tile.min(h - y0)));
        }
    }
    let results: Vec<Result<(Vec<f64>, Vec<f64>, f64)>> = tiles
        .par_iter()
        .enumerate()
        .map(|(i, &(x0, y0, tw, th))| {
            let ex0 = x0.saturating_sub(margin);
            let ey0 = y0.saturating_sub(margin);
            let ex1 = (x0 + tw + margin).min(w);
            let ey1 = (y0 + th + margin).min(h);
            let (ew, eh) = (ex1 - ex0, ey1 - ey0);
            let mut input = Vec::with_capacity(ew * eh);
            for y in ey0..ey1 {
                for x in ex0..ex1 {
                    input.push(F::of((noisy.get(x, y) - lo) / span));
                }
            }
            let fopts = ForwardOptions {
                seed: opts.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..ForwardOptions::default()
            };
            let pass = net.forward(&input, eh, ew, &fopts)?;
            let mut core = Vec::with_capacity(tw * th);
            for y in y0..y0 + th {
                let row = (y - ey0) * ew;
                for x in x0..x0 + tw {
                    core.push(pass.residual[row + x - ex0].as_f64() * span);
                }
            }
            let area = (ew * eh) as f64;
            let spikes = pass.record.theta_per_layer().iter().map(|t| t * area).collect();
            Ok((core, spikes, area))
        })
        .collect();

    let mut residual = vec![0.0; w * h];
    let mut theta_acc: Vec<f64> = Vec::new();
    let mut area_total = 0.0;
    for (&(x0, y0, tw, th), res) in tiles.iter().zip(results) {
        let (core, spikes, area) = res?;
        for y in 0..th {
            residual[(y0 + y) * w + x0..(y0 + y) * w + x0 + tw].copy_from_slice(&core[y * tw..(y + 1) * tw]);
        }
        if theta_acc.is_empty() {
            theta_acc = vec![0.0; spikes.len()];
        }
        theta_acc.iter_mut().zip(&spikes).for_each(|(a, s)| *a += s);
        area_total += area;
    }
    let theta = theta_acc.into_iter().map(|s| s / area_total).collect();
    let data: Vec<f64> = noisy.data().iter().zip(&residual).map(|(y, r)| y - r).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("network produced non-finite output"));
    }
    Ok(Denoised {
        image: noisy.with_data(data)?,
        residual,
        theta,
    })
}
