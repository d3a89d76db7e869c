use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{NetworkConfig, Optimizer, TrainConfig};
use super::denoise::{denoise_detailed, DenoiseOptions};
use super::network::{loss_residual_mse, ForwardOptions, Gradients, SpikingNetwork};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::image::{add_awgn, extract_patches, gaussian_noise, psnr, Augment, ImageGray, NoiseSpec, PatchSpec};
use crate::rate::substream;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Mean PSNR (dB) over the validation images; NaN without validation.
    pub val_psnr: f64,
    /// Mean spike count per neuron of each spiking layer over the epoch.
    pub theta: Vec<f64>,
}

impl EpochLog {
    pub fn csv_header(layers: usize) -> String {
        let mut s = String::from("epoch,loss,val_psnr");
        for l in 1..=layers {
            s.push_str(&format!(",theta_layer_{l}"));
        }
        s
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!("{},{},{}", self.epoch, sig6(self.loss), sig6(self.val_psnr));
        for t in &self.theta {
            s.push(',');
            s.push_str(&sig6(*t));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: SpikingNetwork<f32>,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let layers = self.log.first().map_or(0, |l| l.theta.len());
        let mut s = EpochLog::csv_header(layers);
        s.push('\n');
        for row in &self.log {
            s.push_str(&row.csv_row());
            s.push('\n');
        }
        s
    }
}

/// SplitMix64 finaliser; decorrelates nearby seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noise_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    mix(mix(mix(seed) ^ epoch as u64) ^ index as u64)
}

/// Seed of the fixed noise realisation added to validation image `index`.
pub fn validation_noise_seed(seed: u64, index: usize) -> u64 {
    noise_seed(seed, usize::MAX, index)
}

/// Cuts training patches from clean images, with the augmentation and the
/// optional random subset requested by `cfg`.
pub fn prepare_patches(images: &[ImageGray], cfg: &TrainConfig) -> Result<Vec<ImageGray>> {
    if images.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let spec = PatchSpec {
        size: cfg.patch_size,
        stride: cfg.patch_stride,
        augment: if cfg.augment { Augment::Dihedral } else { Augment::None },
    };
    let mut rng = substream(cfg.seed, 1);
    let mut patches = Vec::new();
    for img in images {
        patches.extend(extract_patches(img, &spec, &mut rng)?);
    }
    if cfg.max_patches > 0 && patches.len() > cfg.max_patches {
        patches.shuffle(&mut rng);
        patches.truncate(cfg.max_patches);
    }
    Ok(patches)
}

/// Trains a fresh network on clean `patches` with noise drawn anew every
/// epoch. `validation` holds clean held-out images; `on_epoch` sees each log
/// line as soon as it is ready.
pub fn train(
    patches: &[ImageGray],
    validation: &[ImageGray],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let net = SpikingNetwork::<f32>::init(net_cfg.clone(), cfg.seed, cfg.init_gain)?;
    train_from(net, patches, validation, cfg, on_epoch)
}

/// [`train`] starting from given weights.
pub fn train_from(
    mut net: SpikingNetwork<f32>,
    patches: &[ImageGray],
    validation: &[ImageGray],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (ph, pw) = (patches[0].height(), patches[0].width());
    if let Some(bad) = patches.iter().find(|p| p.height() != ph || p.width() != pw) {
        return Err(Error::shape(format!("{pw}x{ph} patch"), format!("{}x{}", bad.width(), bad.height())));
    }
    let mut velocity: Vec<f32> = vec![0.0; net.param_count()];
    let mut second: Vec<f32> = match cfg.optimizer {
        Optimizer::Adam => vec![0.0; net.param_count()],
        Optimizer::Sgd => Vec::new(),
    };
    let mut step = 0u32;
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch) as f32;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ 0x5EED) ^ epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut theta_sum: Vec<f64> = Vec::new();

        for (b, batch) in order.chunks(cfg.batch).enumerate() {
            let per_patch: Vec<Result<(f64, Gradients<f32>, Vec<f64>)>> = batch
                .par_iter()
                .map(|&idx| patch_step(&net, &patches[idx], cfg, epoch, idx))
                .collect();
            let mut grads = Gradients::zeros_like(&net);
            let mut batch_loss = 0.0;
            for r in per_patch {
                let (loss, g, theta) = r?;
                batch_loss += loss;
                grads.add_assign(&g);
                if theta_sum.is_empty() {
                    theta_sum = vec![0.0; theta.len()];
                }
                theta_sum.iter_mut().zip(&theta).for_each(|(a, t)| *a += t);
            }
            let mean_loss = batch_loss / batch.len() as f64;
            if !mean_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: mean_loss,
                });
            }
            loss_sum += batch_loss;
            grads.scale(1.0 / batch.len() as f32);
            if cfg.grad_clip > 0.0 {
                let norm = grads.norm();
                if norm > cfg.grad_clip {
                    grads.scale((cfg.grad_clip / norm) as f32);
                }
            }
            step += 1;
            let flat = grads.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias));
            let beta1 = cfg.momentum as f32;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for ((w, v), &g) in net.params_mut().zip(velocity.iter_mut()).zip(flat) {
                        *v = beta1 * *v + g;
                        *w -= lr * *v;
                    }
                }
                Optimizer::Adam => {
                    const BETA2: f32 = 0.999;
                    let c1 = 1.0 - beta1.powi(step as i32);
                    let c2 = 1.0 - BETA2.powi(step as i32);
                    let params = net.params_mut().zip(velocity.iter_mut()).zip(second.iter_mut());
                    for (((w, m), s), &g) in params.zip(flat) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *s = BETA2 * *s + (1.0 - BETA2) * g * g;
                        *w -= lr * (*m / c1) / ((*s / c2).sqrt() + 1e-8);
                    }
                }
            }
            if net.check_finite().is_err() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: mean_loss,
                });
            }
        }

        let n = patches.len() as f64;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / n,
            val_psnr: validation_psnr(&net, validation, cfg)?,
            theta: theta_sum.iter().map(|t| t / n).collect(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { network: net, log })
}

fn patch_step(
    net: &SpikingNetwork<f32>,
    clean: &ImageGray,
    cfg: &TrainConfig,
    epoch: usize,
    idx: usize,
) -> Result<(f64, Gradients<f32>, Vec<f64>)> {
    let (lo, hi) = clean.range();
    let span = hi - lo;
    let seed = noise_seed(cfg.seed, epoch, idx);
    let noise = gaussian_noise(clean.len(), cfg.sigma * span / 255.0, seed);
    let input: Vec<f32> = clean
        .data()
        .iter()
        .zip(&noise)
        .map(|(c, n)| ((c + n - lo) / span) as f32)
        .collect();
    let target: Vec<f32> = noise.iter().map(|n| (n / span) as f32).collect();
    let opts = ForwardOptions {
        seed: mix(seed),
        ..ForwardOptions::default()
    };
    let pass = net.forward(&input, clean.height(), clean.width(), &opts)?;
    let theta = pass.record.theta_per_layer();
    let (loss, grads) = {
        let loss = loss_residual_mse(&pass.residual, &target)?;
        let scale = 2.0 / target.len() as f32;
        let d: Vec<f32> = pass.residual.iter().zip(&target).map(|(r, v)| (r - v) * scale).collect();
        (loss, net.backward(&pass.record, &d)?)
    };
    Ok((loss, grads, theta))
}

/// Mean PSNR of the denoised validation images against their clean
/// versions. Noisy input and denoised output are both quantised to 8 bits,
/// as when they pass through image files.
pub fn validation_psnr(net: &SpikingNetwork<f32>, validation: &[ImageGray], cfg: &TrainConfig) -> Result<f64> {
    if validation.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (i, clean) in validation.iter().enumerate() {
        let noisy = add_awgn(clean, &NoiseSpec::new(cfg.sigma, validation_noise_seed(cfg.seed, i))?)?
            .quantized_u8();
        let out = denoise_detailed(net, &noisy, &DenoiseOptions::default())?;
        let (lo, hi) = clean.range();
        total += psnr(clean, &out.image.quantized_u8(), hi - lo)?.db();
    }
    Ok(total / validation.len() as f64)
}
