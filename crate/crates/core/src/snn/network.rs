use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{Encoding, NetworkConfig, Readout, SurrogateSpec};
use super::conv::{col2im, conv_backward_input, conv_backward_params, conv_forward, im2col, Geometry};
use super::real::Real;
use crate::error::{Error, Result};
use crate::rate::substream;

/// One convolution: `weight` is `out x in x k x k`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<F> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub weight: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Real> ConvLayer<F> {
    fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        ConvLayer {
            in_ch,
            out_ch,
            kernel,
            weight: vec![F::zero(); out_ch * in_ch * kernel * kernel],
            bias: vec![F::zero(); out_ch],
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_ch, self.kernel, self.kernel]
    }

    fn fan_in(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

/// Spike nonlinearity used by a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Binary spikes.
    #[default]
    Hard,
    /// Each spike replaced by its surrogate-smoothed value; resets still use
    /// the binary threshold test. Gradients from [`SpikingNetwork::backward`]
    /// are the exact derivatives of this forward.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardOptions {
    pub mode: SpikeMode,
    /// Seed for the Bernoulli draws of the rate-coded variant.
    pub seed: u64,
}

/// Activity of one spiking layer, stored `[channel][t][y][x]`.
#[derive(Debug, Clone)]
pub struct LayerRecord<F> {
    pub channels: usize,
    /// Membrane potential after integration and before reset (LIF units) or
    /// input current (stochastic units).
    pub pre: Vec<F>,
    pub spikes: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct ForwardRecord<F> {
    pub height: usize,
    pub width: usize,
    pub t_count: usize,
    pub mode: SpikeMode,
    /// Network input: the analog image (one frame) or its spike trains.
    pub input: Vec<F>,
    pub input_frames: usize,
    /// Spiking layers in order; the spike-rate readout appends its own.
    pub layers: Vec<LayerRecord<F>>,
}

impl<F: Real> ForwardRecord<F> {
    /// `(T, C, H, W)` of layer `l`.
    pub fn shape(&self, l: usize) -> (usize, usize, usize, usize) {
        (self.t_count, self.layers[l].channels, self.height, self.width)
    }

    pub fn spike(&self, l: usize, t: usize, c: usize, y: usize, x: usize) -> F {
        let plane = self.height * self.width;
        self.layers[l].spikes[(c * self.t_count + t) * plane + y * self.width + x]
    }

    /// Mean spike count per neuron of each layer over the whole window.
    pub fn theta_per_layer(&self) -> Vec<f64> {
        let plane = (self.height * self.width) as f64;
        self.layers
            .iter()
            .map(|l| {
                let total: f64 = l.spikes.iter().map(|s| s.as_f64()).sum();
                total / (l.channels as f64 * plane)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass<F> {
    /// Residual estimate, same layout as the input.
    pub residual: Vec<F>,
    pub record: ForwardRecord<F>,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<ConvLayer<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(net: &SpikingNetwork<F>) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.in_ch, l.out_ch, l.kernel))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += *y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .all(|x| x.is_finite())
    }
}

/// Convolutional network of LIF units carrying membrane state over `T`
/// timesteps, mapping a noisy image to its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingNetwork<F = f32> {
    config: NetworkConfig,
    layers: Vec<ConvLayer<F>>,
}

impl<F: Real> SpikingNetwork<F> {
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_channels()
            .into_iter()
            .map(|(i, o)| ConvLayer::zeros(i, o, config.kernel))
            .collect();
        Ok(SpikingNetwork { config, layers })
    }

    /// Uniform weights in `+-gain * sqrt(6 / fan_in)`, zero biases. A
    /// membrane readout always uses gain 1: `gain` sets spiking activity.
    pub fn init(config: NetworkConfig, seed: u64, gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::invalid("init gain must be > 0"));
        }
        let mut net = Self::zeros(config)?;
        let membrane_readout = net.config.readout == Readout::MembraneMean;
        let last = net.layers.len() - 1;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let g = if membrane_readout && l == last { 1.0 } else { gain };
            let bound = g * (6.0 / layer.fan_in() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let mut rng = substream(seed, l as u64);
            for w in &mut layer.weight {
                *w = F::of(dist.sample(&mut rng));
            }
        }
        Ok(net)
    }

    /// Assembles a network from explicit tensors, checking shapes and values.
    pub fn from_layers(config: NetworkConfig, layers: Vec<ConvLayer<F>>) -> Result<Self> {
        let template = Self::zeros(config)?;
        if layers.len() != template.layers.len() {
            return Err(Error::shape(
                format!("{} layers", template.layers.len()),
                format!("{} layers", layers.len()),
            ));
        }
        for (l, (got, want)) in layers.iter().zip(&template.layers).enumerate() {
            if got.weight_shape() != want.weight_shape()
                || got.weight.len() != want.weight.len()
                || got.bias.len() != want.bias.len()
            {
                return Err(Error::shape(
                    format!("layer {l} weight {:?}", want.weight_shape()),
                    format!("{:?} with {} values", got.weight_shape(), got.weight.len()),
                ));
            }
        }
        let net = SpikingNetwork {
            config: template.config,
            layers,
        };
        net.check_finite()?;
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer<F>] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Visits every parameter: weights then bias, layer by layer.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &F> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias))
    }

    pub fn check_finite(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            if !layer.weight.iter().chain(&layer.bias).all(|w| w.is_finite()) {
                return Err(Error::NonFiniteWeights { layer: l });
            }
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> SpikingNetwork<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::of(x.as_f64())).collect();
        SpikingNetwork {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    in_ch: l.in_ch,
                    out_ch: l.out_ch,
                    kernel: l.kernel,
                    weight: conv(&l.weight),
                    bias: conv(&l.bias),
                })
                .collect(),
        }
    }

    /// Runs the network on one `height x width` input with values in `[0, 1]`.
    pub fn forward(
        &self,
        input: &[F],
        height: usize,
        width: usize,
        opts: &ForwardOptions,
    ) -> Result<ForwardPass<F>> {
        let plane = height * width;
        if plane == 0 || input.len() != plane {
            return Err(Error::shape(
                format!("{height}x{width} = {plane} values"),
                format!("{} values", input.len()),
            ));
        }
        let cfg = &self.config;
        let t = cfg.t_count;
        let dyn_ = Dynamics::new(cfg, opts.mode);

        let (net_input, input_frames) = match cfg.encoding {
            Encoding::Lif => (input.to_vec(), 1),
            Encoding::Rate => {
                let mut rng = substream(opts.seed, 0);
                let mut spikes = vec![F::zero(); t * plane];
                for f in 0..t {
                    for (s, &p) in spikes[f * plane..(f + 1) * plane].iter_mut().zip(input) {
                        let p = p.max(F::zero()).min(F::one());
                        *s = if rng.gen::<f64>() < p.as_f64() { F::one() } else { F::zero() };
                    }
                }
                (spikes, t)
            }
        };

        let mut col = Vec::new();
        let mut current = Vec::new();
        let mut layers: Vec<LayerRecord<F>> = Vec::with_capacity(cfg.depth);
        let last = cfg.depth - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (src, frames) = match layers.last() {
                None => (&net_input, input_frames),
                Some(rec) => (&rec.spikes, t),
            };
            let g = Geometry {
                frames,
                height,
                width,
            };
            im2col(src, layer.in_ch, g, layer.kernel, &mut col);
            conv_forward(&layer.weight, &layer.bias, &col, layer.out_ch, g.span(), &mut current);
            if l == last && cfg.readout == Readout::MembraneMean {
                let residual = membrane_mean(&current, t, plane, &dyn_);
                return Ok(ForwardPass {
                    residual,
                    record: ForwardRecord {
                        height,
                        width,
                        t_count: t,
                        mode: opts.mode,
                        input: net_input,
                        input_frames,
                        layers,
                    },
                });
            }
            let mut rng = substream(opts.seed, l as u64 + 1);
            let stochastic = cfg.encoding == Encoding::Rate;
            layers.push(dyn_.spiking_layer(&current, layer.out_ch, frames, plane, stochastic, &mut rng));
        }
        // Spike-rate readout: positive minus negative map, averaged over time.
        let out = layers.last().expect("readout layer");
        let inv_t = F::of(1.0 / t as f64);
        let mut residual = vec![F::zero(); plane];
        for ti in 0..t {
            let pos = &out.spikes[ti * plane..(ti + 1) * plane];
            let neg = &out.spikes[(t + ti) * plane..(t + ti + 1) * plane];
            for ((r, &a), &b) in residual.iter_mut().zip(pos).zip(neg) {
                *r += (a - b) * inv_t;
            }
        }
        Ok(ForwardPass {
            residual,
            record: ForwardRecord {
                height,
                width,
                t_count: t,
                mode: opts.mode,
                input: net_input,
                input_frames,
                layers,
            },
        })
    }

    /// Backpropagation through time of `d_residual` (dL/dR) along a recorded
    /// forward pass.
    pub fn backward(&self, rec: &ForwardRecord<F>, d_residual: &[F]) -> Result<Gradients<F>> {
        let cfg = &self.config;
        let (h, w, t) = (rec.height, rec.width, rec.t_count);
        let plane = h * w;
        let spiking = cfg.depth - 1 + usize::from(cfg.readout == Readout::SpikeRate);
        if rec.layers.len() != spiking || t != cfg.t_count {
            return Err(Error::invalid("forward record does not belong to this network"));
        }
        if d_residual.len() != plane {
            return Err(Error::shape(format!("{plane} values"), format!("{}", d_residual.len())));
        }
        let dyn_ = Dynamics::new(cfg, rec.mode);
        let inv_t = F::of(1.0 / t as f64);
        let stochastic = cfg.encoding == Encoding::Rate;

        // Gradient w.r.t. the last layer's current.
        let mut d_current = match cfg.readout {
            Readout::MembraneMean => {
                let mut d = vec![F::zero(); t * plane];
                let mut g = vec![F::zero(); plane];
                for ti in (0..t).rev() {
                    let dst = &mut d[ti * plane..(ti + 1) * plane];
                    for ((gp, dc), &dr) in g.iter_mut().zip(dst.iter_mut()).zip(d_residual) {
                        *gp = dr * inv_t + dyn_.leak * *gp;
                        *dc = *gp * dyn_.inv_tau;
                    }
                }
                d
            }
            Readout::SpikeRate => {
                let mut ds = vec![F::zero(); 2 * t * plane];
                for ti in 0..t {
                    for p in 0..plane {
                        ds[ti * plane + p] = d_residual[p] * inv_t;
                        ds[(t + ti) * plane + p] = -d_residual[p] * inv_t;
                    }
                }
                let rec_out = rec.layers.last().expect("readout record");
                dyn_.spiking_backward(&ds, rec_out, t, plane, stochastic)
            }
        };

        let mut grads = Gradients::zeros_like(self);
        let mut col = Vec::new();
        let mut d_col = Vec::new();
        for l in (0..cfg.depth).rev() {
            let layer = &self.layers[l];
            let (src, frames) = if l == 0 {
                (&rec.input, rec.input_frames)
            } else {
                (&rec.layers[l - 1].spikes, t)
            };
            let g = Geometry {
                frames,
                height: h,
                width: w,
            };
            if frames == 1 && t > 1 {
                // Analog input drives every step with the same current.
                let mut summed = vec![F::zero(); layer.out_ch * plane];
                for c in 0..layer.out_ch {
                    let dst = &mut summed[c * plane..(c + 1) * plane];
                    for ti in 0..t {
                        let s = &d_current[(c * t + ti) * plane..(c * t + ti + 1) * plane];
                        dst.iter_mut().zip(s).for_each(|(a, &b)| *a += b);
                    }
                }
                d_current = summed;
            }
            im2col(src, layer.in_ch, g, layer.kernel, &mut col);
            let gl = &mut grads.layers[l];
            conv_backward_params(&d_current, &col, layer.out_ch, g.span(), &mut gl.weight, &mut gl.bias);
            if l == 0 {
                break;
            }
            conv_backward_input(&layer.weight, &d_current, layer.out_ch, g.span(), &mut d_col);
            let mut d_spikes = vec![F::zero(); layer.in_ch * g.span()];
            col2im(&d_col, layer.in_ch, g, layer.kernel, &mut d_spikes);
            d_current = dyn_.spiking_backward(&d_spikes, &rec.layers[l - 1], t, plane, stochastic);
        }
        Ok(grads)
    }
}

/// Per-network constants of the unit dynamics.
struct Dynamics<F> {
    v_th: F,
    v_reset: F,
    tau: F,
    inv_tau: F,
    leak: F,
    t_count: usize,
    mode: SpikeMode,
    surrogate: SurrogateSpec,
}

impl<F: Real> Dynamics<F> {
    fn new(cfg: &NetworkConfig, mode: SpikeMode) -> Self {
        let tau = cfg.lif.tau();
        Dynamics {
            v_th: F::of(cfg.lif.v_th()),
            v_reset: F::of(cfg.lif.v_reset()),
            tau: F::of(tau),
            inv_tau: F::of(1.0 / tau),
            leak: F::of(1.0 - 1.0 / tau),
            t_count: cfg.t_count,
            mode,
            surrogate: cfg.surrogate,
        }
    }

    /// Runs `channels` maps of units over `T` steps. `current` holds one frame
    /// per channel (constant drive) or `T` frames.
    fn spiking_layer(
        &self,
        current: &[F],
        channels: usize,
        frames: usize,
        plane: usize,
        stochastic: bool,
        rng: &mut ChaCha8Rng,
    ) -> LayerRecord<F> {
        let t = self.t_count;
        let mut pre = vec![F::zero(); channels * t * plane];
        let mut spikes = vec![F::zero(); channels * t * plane];
        let mut v = vec![F::zero(); plane];
        for c in 0..channels {
            v.fill(self.v_reset);
            for ti in 0..t {
                let f = if frames == 1 { 0 } else { ti };
                let cur = &current[(c * frames + f) * plane..(c * frames + f + 1) * plane];
                let off = (c * t + ti) * plane;
                let pre_t = &mut pre[off..off + plane];
                let s_t = &mut spikes[off..off + plane];
                if stochastic {
                    for ((p, s), &i) in pre_t.iter_mut().zip(s_t.iter_mut()).zip(cur) {
                        *p = i;
                        let prob = i.max(F::zero()).min(F::one());
                        *s = match self.mode {
                            SpikeMode::Hard => {
                                if rng.gen::<f64>() < prob.as_f64() {
                                    F::one()
                                } else {
                                    F::zero()
                                }
                            }
                            SpikeMode::Relaxed => prob,
                        };
                    }
                    continue;
                }
                for (((vm, p), s), &i) in v.iter_mut().zip(pre_t.iter_mut()).zip(s_t.iter_mut()).zip(cur) {
                    let vp = *vm + (-(*vm - self.v_reset) + i) / self.tau;
                    *p = vp;
                    let fired = vp >= self.v_th;
                    *s = match self.mode {
                        SpikeMode::Hard => {
                            if fired {
                                F::one()
                            } else {
                                F::zero()
                            }
                        }
                        SpikeMode::Relaxed => self.surrogate.relaxed_f(vp - self.v_th),
                    };
                    *vm = if fired { self.v_reset } else { vp };
                }
            }
        }
        LayerRecord {
            channels,
            pre,
            spikes,
        }
    }

    /// dL/d(current) from dL/d(spikes), reverse in time. The reset is
    /// detached: no gradient flows through the threshold test.
    fn spiking_backward(
        &self,
        d_spikes: &[F],
        rec: &LayerRecord<F>,
        t: usize,
        plane: usize,
        stochastic: bool,
    ) -> Vec<F> {
        let mut d_current = vec![F::zero(); d_spikes.len()];
        if stochastic {
            for ((dc, &ds), &i) in d_current.iter_mut().zip(d_spikes).zip(&rec.pre) {
                *dc = if i > F::zero() && i < F::one() { ds } else { F::zero() };
            }
            return d_current;
        }
        let mut g_post = vec![F::zero(); plane];
        for c in 0..rec.channels {
            g_post.fill(F::zero());
            for ti in (0..t).rev() {
                let off = (c * t + ti) * plane;
                for (p, gp) in g_post.iter_mut().enumerate() {
                    let vp = rec.pre[off + p];
                    let carry = if vp >= self.v_th { F::zero() } else { *gp };
                    let g_pre = d_spikes[off + p] * self.surrogate.derivative_f(vp - self.v_th) + carry;
                    d_current[off + p] = g_pre * self.inv_tau;
                    *gp = g_pre * self.leak;
                }
            }
        }
        d_current
    }
}

/// Time-mean of a leaky non-spiking membrane driven by `current` (`T` frames).
fn membrane_mean<F: Real>(current: &[F], t: usize, plane: usize, d: &Dynamics<F>) -> Vec<F> {
    let mut u = vec![F::zero(); plane];
    let mut acc = vec![F::zero(); plane];
    for ti in 0..t {
        let cur = &current[ti * plane..(ti + 1) * plane];
        for ((u, a), &i) in u.iter_mut().zip(acc.iter_mut()).zip(cur) {
            *u = *u + (-*u + i) / d.tau;
            *a += *u;
        }
    }
    let inv_t = F::of(1.0 / t as f64);
    acc.iter_mut().for_each(|a| *a *= inv_t);
    acc
}

/// Mean over pixels of `(residual - target)^2`.
pub fn loss_residual_mse<F: Real>(residual: &[F], target: &[F]) -> Result<f64> {
    if residual.len() != target.len() || residual.is_empty() {
        return Err(Error::shape(
            format!("{} values", target.len()),
            format!("{} values", residual.len()),
        ));
    }
    let sum: f64 = residual
        .iter()
        .zip(target)
        .map(|(r, v)| {
            let d = r.as_f64() - v.as_f64();
            d * d
        })
        .sum();
    Ok(sum / residual.len() as f64)
}

/// Forward, loss and BPTT gradients for one `(noisy, residual target)` pair.
pub fn backward_bptt<F: Real>(
    net: &SpikingNetwork<F>,
    input: &[F],
    target: &[F],
    height: usize,
    width: usize,
    opts: &ForwardOptions,
) -> Result<(f64, Gradients<F>)> {
    let pass = net.forward(input, height, width, opts)?;
    let loss = loss_residual_mse(&pass.residual, target)?;
    let scale = F::of(2.0 / target.len() as f64);
    let d: Vec<F> = pass
        .residual
        .iter()
        .zip(target)
        .map(|(&r, &v)| (r - v) * scale)
        .collect();
    let grads = net.backward(&pass.record, &d)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::snn::config::{SurrogateShape, SurrogateSpec};

    fn small_cfg(depth: usize, channels: usize, t: usize) -> NetworkConfig {
        NetworkConfig {
            depth,
            channels,
            t_count: t,
            ..NetworkConfig::default()
        }
    }

    fn random_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    fn with_random_biases(mut net: SpikingNetwork<f64>, seed: u64) -> SpikingNetwork<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.6));
        }
        net
    }

    #[test]
    fn zero_network_outputs_zero_residual() {
        let net = SpikingNetwork::<f64>::zeros(small_cfg(3, 4, 5)).unwrap();
        let y = random_vec(36, 0.0, 1.0, 1);
        let pass = net.forward(&y, 6, 6, &ForwardOptions::default()).unwrap();
        assert!(pass.residual.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn record_is_binary_with_config_shapes() {
        for encoding in [Encoding::Lif, Encoding::Rate] {
            let cfg = NetworkConfig {
                encoding,
                ..small_cfg(4, 6, 5)
            };
            let net = SpikingNetwork::<f32>::init(cfg, 3, 1.5).unwrap();
            let y: Vec<f32> = random_vec(7 * 9, 0.0, 1.0, 2).iter().map(|&v| v as f32 * 3.0).collect();
            let pass = net.forward(&y, 7, 9, &ForwardOptions::default()).unwrap();
            assert_eq!(pass.record.layers.len(), 3);
            for l in 0..3 {
                assert_eq!(pass.record.shape(l), (5, 6, 7, 9));
                assert!(pass.record.layers[l].spikes.iter().all(|&s| s == 0.0 || s == 1.0));
            }
            let total: f32 = pass.record.layers[0].spikes.iter().sum();
            assert!(total > 0.0, "{encoding} layer 0 silent");
        }
    }

    #[test]
    fn subthreshold_depth_two_gives_bias_map() {
        // One step, hidden currents below threshold: U = I / tau = b / tau.
        let mut net = SpikingNetwork::<f64>::zeros(small_cfg(2, 3, 1)).unwrap();
        net.layers[0].weight.iter_mut().for_each(|w| *w = 0.05);
        net.layers[1].weight.iter_mut().for_each(|w| *w = -0.7);
        net.layers[1].bias[0] = 0.3;
        let y = random_vec(25, 0.0, 1.0, 4);
        let pass = net.forward(&y, 5, 5, &ForwardOptions::default()).unwrap();
        assert!(pass.record.layers[0].spikes.iter().all(|&s| s == 0.0));
        for r in pass.residual {
            assert!((r - 0.3 / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn membrane_readout_matches_hand_recurrence() {
        // Constant readout drive c for T steps: U_t = c (1 - leak^t).
        let mut net = SpikingNetwork::<f64>::zeros(small_cfg(2, 1, 4)).unwrap();
        net.layers[1].bias[0] = 0.8;
        let pass = net.forward(&[0.5; 4], 2, 2, &ForwardOptions::default()).unwrap();
        let expected: f64 = (1..=4).map(|t| 0.8 * (1.0 - 0.5f64.powi(t))).sum::<f64>() / 4.0;
        assert!((pass.residual[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn hidden_layer_follows_scalar_lif() {
        // 1x1 kernel, single channel: every pixel is an independent LIF neuron
        // driven by w * y + b.
        let cfg = NetworkConfig {
            kernel: 1,
            ..small_cfg(2, 1, 8)
        };
        let mut net = SpikingNetwork::<f64>::zeros(cfg).unwrap();
        net.layers[0].weight[0] = 2.0;
        net.layers[0].bias[0] = 0.5;
        let y = [0.1, 0.3, 0.45, 0.6, 0.9, 1.2];
        let pass = net.forward(&y, 1, 6, &ForwardOptions::default()).unwrap();
        let p = crate::lif::LifParams::default();
        for (x, &yv) in y.iter().enumerate() {
            let trace = crate::lif::encode_lif(2.0 * yv + 0.5, 8, &p).unwrap();
            for t in 0..8 {
                let s = pass.record.spike(0, t, 0, 0, x);
                assert_eq!(s == 1.0, trace.spikes.bits()[t], "pixel {x} step {t}");
            }
        }
    }

    #[test]
    fn loss_examples() {
        let v = random_vec(50, -1.0, 1.0, 5);
        assert_eq!(loss_residual_mse(&v, &v).unwrap(), 0.0);
        assert!((loss_residual_mse(&[0.0; 10], &[0.3; 10]).unwrap() - 0.09).abs() < 1e-15);
        let r = random_vec(50, -1.0, 1.0, 6);
        let mut acc = 0.0;
        for i in 0..50 {
            acc += (r[i] - v[i]).powi(2);
        }
        assert!((loss_residual_mse(&r, &v).unwrap() - acc / 50.0).abs() < 1e-15);
        assert!(loss_residual_mse(&r[..3], &v).is_err());
    }

    #[test]
    fn zero_network_gradients() {
        let net = SpikingNetwork::<f64>::zeros(small_cfg(3, 4, 3)).unwrap();
        let y = random_vec(36, 0.0, 1.0, 7);
        let (loss, g) = backward_bptt(&net, &y, &[0.0; 36], 6, 6, &ForwardOptions::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.layers.iter().all(|l| l.weight.iter().chain(&l.bias).all(|&x| x == 0.0)));

        // A nonzero target only reaches the readout bias.
        let (_, g) = backward_bptt(&net, &y, &[0.1; 36], 6, 6, &ForwardOptions::default()).unwrap();
        for (l, layer) in g.layers.iter().enumerate() {
            assert!(layer.weight.iter().all(|&x| x == 0.0));
            if l < 2 {
                assert!(layer.bias.iter().all(|&x| x == 0.0));
            }
        }
        assert!(g.layers[2].bias[0] < 0.0);
    }

    /// Largest relative error between BPTT and central differences of the
    /// relaxed forward over `samples` random parameters.
    fn fd_check(cfg: NetworkConfig, samples: usize, seed: u64) -> f64 {
        let (h, w) = (8, 8);
        let net = with_random_biases(SpikingNetwork::<f64>::init(cfg, seed, 1.2).unwrap(), seed + 1);
        let y = random_vec(h * w, 0.0, 1.0, seed + 2);
        let v = random_vec(h * w, -0.2, 0.2, seed + 3);
        let opts = ForwardOptions {
            mode: SpikeMode::Relaxed,
            seed: 9,
        };
        let (_, grads) = backward_bptt(&net, &y, &v, h, w, &opts).unwrap();
        let analytic: Vec<f64> = grads
            .layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect();
        let loss_at = |n: &SpikingNetwork<f64>| {
            let pass = n.forward(&y, h, w, &opts).unwrap();
            loss_residual_mse(&pass.residual, &v).unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
        let mut worst: f64 = 0.0;
        let eps = 1e-6;
        for _ in 0..samples {
            let i = rng.gen_range(0..net.param_count());
            let mut plus = net.clone();
            *plus.params_mut().nth(i).unwrap() += eps;
            let mut minus = net.clone();
            *minus.params_mut().nth(i).unwrap() -= eps;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let a = analytic[i];
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-9 {
                worst = worst.max((a - numeric).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for shape in [SurrogateShape::Rectangular, SurrogateShape::FastSigmoid] {
            let cfg = NetworkConfig {
                surrogate: SurrogateSpec::new(shape, 1.0).unwrap(),
                ..small_cfg(2, 4, 3)
            };
            let err = fd_check(cfg, 40, 11);
            assert!(err < 1e-4, "{shape}: {err}");
        }
        let deeper = NetworkConfig {
            readout: Readout::SpikeRate,
            ..small_cfg(3, 3, 4)
        };
        assert!(fd_check(deeper, 40, 21) < 1e-4);
        let rate = NetworkConfig {
            encoding: Encoding::Rate,
            ..small_cfg(3, 3, 3)
        };
        assert!(fd_check(rate, 40, 31) < 1e-4);
    }

    #[test]
    fn gradients_invariant_to_translation() {
        // A blob inside a zero field; hidden biases are zero so the field
        // stays silent and only the blob's position changes.
        let cfg = small_cfg(3, 3, 4);
        let mut net = SpikingNetwork::<f64>::init(cfg, 5, 1.5).unwrap();
        net.layers[2].bias[0] = 0.2;
        let (h, w) = (20, 20);
        let blob = random_vec(16, 0.5, 1.0, 8);
        let image = |ox: usize, oy: usize| {
            let mut img = vec![0.0; h * w];
            for y in 0..4 {
                for x in 0..4 {
                    img[(oy + y) * w + ox + x] = blob[y * 4 + x];
                }
            }
            img
        };
        let zero = vec![0.0; h * w];
        let opts = ForwardOptions::default();
        let (_, a) = backward_bptt(&net, &image(6, 6), &zero, h, w, &opts).unwrap();
        let (_, b) = backward_bptt(&net, &image(9, 7), &zero, h, w, &opts).unwrap();
        assert!(a.norm() > 0.0);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            for (x, y) in la.weight.iter().chain(&la.bias).zip(lb.weight.iter().chain(&lb.bias)) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let net = SpikingNetwork::<f32>::zeros(small_cfg(2, 2, 2)).unwrap();
        assert!(matches!(
            net.forward(&[0.0; 10], 3, 3, &ForwardOptions::default()),
            Err(Error::ShapeMismatch { .. })
        ));
        let other = SpikingNetwork::<f32>::zeros(small_cfg(3, 2, 2)).unwrap();
        let pass = net.forward(&[0.0; 9], 3, 3, &ForwardOptions::default()).unwrap();
        assert!(other.backward(&pass.record, &[0.0; 9]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = small_cfg(3, 4, 2);
        let a = SpikingNetwork::<f32>::init(cfg.clone(), 1, 1.0).unwrap();
        let b = SpikingNetwork::<f32>::init(cfg.clone(), 1, 1.0).unwrap();
        let c = SpikingNetwork::<f32>::init(cfg, 2, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let d = SpikingNetwork::<f32>::init(small_cfg(3, 4, 2), 1, 2.0).unwrap();
        assert_eq!(d.layers()[2], a.layers()[2]);
        assert_ne!(d.layers()[0], a.layers()[0]);
        for l in a.layers() {
            let bound = (6.0 / (l.in_ch * 9) as f64).sqrt() as f32;
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }
}
