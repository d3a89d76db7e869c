use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::error::{Error, Result};
use crate::lif::LifParams;

/// How the last layer turns activity into the residual map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    /// Non-spiking leaky membrane; residual is its mean over time.
    MembraneMean,
    /// Two spiking output maps (positive, negative); residual is the
    /// difference of their firing rates.
    SpikeRate,
}

/// How the network turns pixels into activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// First convolution sees the analog image and drives LIF membranes.
    Lif,
    /// Pixels enter as Bernoulli spike trains and every hidden unit emits a
    /// Bernoulli spike with probability equal to its clamped input current.
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateShape {
    Rectangular,
    Triangular,
    FastSigmoid,
}

/// Pseudo-derivative of the spike nonlinearity, centred at the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub shape: SurrogateShape,
    pub width: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec {
            shape: SurrogateShape::Rectangular,
            width: 1.0,
        }
    }
}

impl SurrogateSpec {
    pub fn new(shape: SurrogateShape, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!("surrogate width must be > 0, got {width}")));
        }
        Ok(SurrogateSpec { shape, width })
    }

    /// Derivative at `u = v - v_th`. Every shape integrates to one.
    pub fn derivative(&self, u: f64) -> f64 {
        self.derivative_f(u)
    }

    /// Antiderivative of [`Self::derivative`] with value 0 at `-inf` and 1
    /// at `+inf`: the smooth stand-in for the Heaviside spike.
    pub fn relaxed(&self, u: f64) -> f64 {
        self.relaxed_f(u)
    }

    pub(crate) fn derivative_f<F: Real>(&self, u: F) -> F {
        let w = F::of(self.width);
        let half = F::of(0.5);
        match self.shape {
            SurrogateShape::Rectangular => {
                if u.abs() < w * half {
                    w.recip()
                } else {
                    F::zero()
                }
            }
            SurrogateShape::Triangular => (F::one() - u.abs() / w).max(F::zero()) / w,
            SurrogateShape::FastSigmoid => {
                let a = F::one() + u.abs() / w;
                half / (w * a * a)
            }
        }
    }

    pub(crate) fn relaxed_f<F: Real>(&self, u: F) -> F {
        let w = F::of(self.width);
        let half = F::of(0.5);
        match self.shape {
            SurrogateShape::Rectangular => (u / w + half).max(F::zero()).min(F::one()),
            SurrogateShape::Triangular => {
                if u <= -w {
                    F::zero()
                } else if u < F::zero() {
                    let d = u + w;
                    d * d * half / (w * w)
                } else if u < w {
                    let d = w - u;
                    F::one() - d * d * half / (w * w)
                } else {
                    F::one()
                }
            }
            SurrogateShape::FastSigmoid => {
                let tail = half / (F::one() + u.abs() / w);
                if u < F::zero() {
                    tail
                } else {
                    F::one() - tail
                }
            }
        }
    }
}

/// Surrogate gradient factor for membrane potential `v`.
pub fn surrogate_derivative(v: f64, spec: &SurrogateSpec, p: &LifParams) -> f64 {
    spec.derivative(v - p.v_th())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    pub channels: usize,
    pub kernel: usize,
    pub t_count: usize,
    pub lif: LifParams,
    pub readout: Readout,
    pub encoding: Encoding,
    pub surrogate: SurrogateSpec,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            depth: 5,
            channels: 32,
            kernel: 3,
            t_count: 7,
            lif: LifParams::default(),
            readout: Readout::MembraneMean,
            encoding: Encoding::Lif,
            surrogate: SurrogateSpec::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid(format!("depth must be >= 2, got {}", self.depth)));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::invalid(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.channels == 0 {
            return Err(Error::invalid("channels must be >= 1"));
        }
        if self.t_count == 0 {
            return Err(Error::invalid("t_count must be >= 1"));
        }
        SurrogateSpec::new(self.surrogate.shape, self.surrogate.width)?;
        LifParams::new(self.lif.v_th(), self.lif.tau(), self.lif.v_reset())?;
        Ok(())
    }

    pub fn output_channels(&self) -> usize {
        match self.readout {
            Readout::MembraneMean => 1,
            Readout::SpikeRate => 2,
        }
    }

    /// `(in, out)` channel counts per layer.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let cin = if l == 0 { 1 } else { self.channels };
                let cout = if l + 1 == self.depth {
                    self.output_channels()
                } else {
                    self.channels
                };
                (cin, cout)
            })
            .collect()
    }

    /// Pixels on each side that influence one output pixel.
    pub fn receptive_radius(&self) -> usize {
        self.depth * (self.kernel / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// SGD with heavy-ball momentum.
    Sgd,
    /// Adam with `beta1 = momentum`, `beta2 = 0.999`, `eps = 1e-8`.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Noise standard deviation on the 0..255 scale.
    pub sigma: f64,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub patch_size: usize,
    pub patch_stride: usize,
    /// Upper bound on training patches; 0 keeps all.
    pub max_patches: usize,
    pub augment: bool,
    /// Multiply the learning rate by `lr_gamma` every `lr_step` epochs.
    pub lr_step: usize,
    pub lr_gamma: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Scale on the fan-in uniform initialisation bound.
    pub init_gain: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sigma: 25.0,
            lr: 0.05,
            optimizer: Optimizer::Sgd,
            momentum: 0.9,
            epochs: 30,
            batch: 16,
            seed: 0,
            patch_size: 40,
            patch_stride: 10,
            max_patches: 0,
            augment: true,
            lr_step: 10,
            lr_gamma: 0.5,
            grad_clip: 1.0,
            init_gain: 3.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        // lr = 0 is accepted: it freezes the weights.
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch == 0 || self.patch_size == 0 || self.patch_stride == 0 {
            return Err(Error::invalid("batch, patch_size and patch_stride must be >= 1"));
        }
        if self.lr_step == 0 || !(self.lr_gamma > 0.0 && self.lr_gamma.is_finite()) {
            return Err(Error::invalid("lr_step must be >= 1 and lr_gamma > 0"));
        }
        if !(self.grad_clip >= 0.0 && self.init_gain > 0.0) {
            return Err(Error::invalid("grad_clip must be >= 0 and init_gain > 0"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_gamma.powi((epoch / self.lr_step) as i32)
    }
}

/// Network and training settings read from `key = value` text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let net = &mut self.network;
        let tr = &mut self.train;
        match key {
            "depth" => net.depth = parse(key, value)?,
            "channels" => net.channels = parse(key, value)?,
            "kernel" => net.kernel = parse(key, value)?,
            "timesteps" | "t_count" => net.t_count = parse(key, value)?,
            "v_th" => net.lif = LifParams::new(parse(key, value)?, net.lif.tau(), net.lif.v_reset())?,
            "tau" => net.lif = LifParams::new(net.lif.v_th(), parse(key, value)?, net.lif.v_reset())?,
            "v_reset" => net.lif = LifParams::new(net.lif.v_th(), net.lif.tau(), parse(key, value)?)?,
            "readout" => net.readout = parse(key, value)?,
            "encoding" => net.encoding = parse(key, value)?,
            "surrogate" => net.surrogate.shape = parse(key, value)?,
            "surrogate_width" => net.surrogate.width = parse(key, value)?,
            "sigma" => tr.sigma = parse(key, value)?,
            "lr" => tr.lr = parse(key, value)?,
            "optimizer" => tr.optimizer = parse(key, value)?,
            "momentum" => tr.momentum = parse(key, value)?,
            "epochs" => tr.epochs = parse(key, value)?,
            "batch" => tr.batch = parse(key, value)?,
            "seed" => tr.seed = parse(key, value)?,
            "patch_size" => tr.patch_size = parse(key, value)?,
            "patch_stride" => tr.patch_stride = parse(key, value)?,
            "max_patches" => tr.max_patches = parse(key, value)?,
            "augment" => tr.augment = parse(key, value)?,
            "lr_step" => tr.lr_step = parse(key, value)?,
            "lr_gamma" => tr.lr_gamma = parse(key, value)?,
            "grad_clip" => tr.grad_clip = parse(key, value)?,
            "init_gain" => tr.init_gain = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()
    }

    /// Every setting as `(key, value)`, in a form [`Self::parse`] accepts.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (n, t) = (&self.network, &self.train);
        vec![
            ("depth", n.depth.to_string()),
            ("channels", n.channels.to_string()),
            ("kernel", n.kernel.to_string()),
            ("timesteps", n.t_count.to_string()),
            ("v_th", n.lif.v_th().to_string()),
            ("tau", n.lif.tau().to_string()),
            ("v_reset", n.lif.v_reset().to_string()),
            ("readout", n.readout.to_string()),
            ("encoding", n.encoding.to_string()),
            ("surrogate", n.surrogate.shape.to_string()),
            ("surrogate_width", n.surrogate.width.to_string()),
            ("sigma", t.sigma.to_string()),
            ("lr", t.lr.to_string()),
            ("optimizer", t.optimizer.to_string()),
            ("momentum", t.momentum.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch", t.batch.to_string()),
            ("seed", t.seed.to_string()),
            ("patch_size", t.patch_size.to_string()),
            ("patch_stride", t.patch_stride.to_string()),
            ("max_patches", t.max_patches.to_string()),
            ("augment", t.augment.to_string()),
            ("lr_step", t.lr_step.to_string()),
            ("lr_gamma", t.lr_gamma.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
            ("init_gain", t.init_gain.to_string()),
        ]
    }

    pub fn to_kv_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

macro_rules! keyword_enum {
    ($ty:ty, $($variant:path => $name:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::Config(format!(
                        "expected one of {}, got `{s}`",
                        [$($name),+].join("|")
                    ))),
                }
            }
        }
    };
}

keyword_enum!(Readout, Readout::MembraneMean => "membrane-mean", Readout::SpikeRate => "spike-rate");
keyword_enum!(Optimizer, Optimizer::Sgd => "sgd", Optimizer::Adam => "adam");
keyword_enum!(Encoding, Encoding::Lif => "lif", Encoding::Rate => "rate");
keyword_enum!(
    SurrogateShape,
    SurrogateShape::Rectangular => "rectangular",
    SurrogateShape::Triangular => "triangular",
    SurrogateShape::FastSigmoid => "fast-sigmoid",
);
