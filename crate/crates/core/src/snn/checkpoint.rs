//! JSON checkpoint: configuration echo plus weight tensors as 64-bit floats.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{NetworkConfig, TrainConfig};
use super::network::{ConvLayer, SpikingNetwork};
use super::real::Real;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "spikecode-snn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn new<F: Real>(shape: Vec<usize>, data: &[F]) -> Self {
        Tensor {
            shape,
            data: data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    fn values<F: Real>(&self, what: &str) -> Result<Vec<F>> {
        let n: usize = self.shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Checkpoint(format!(
                "{what}: shape {:?} declares {n} values, found {}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(self.data.iter().map(|&v| F::of(v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTensors {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: NetworkConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub layers: Vec<LayerTensors>,
}

impl Checkpoint {
    pub fn from_network<F: Real>(net: &SpikingNetwork<F>, train: Option<&TrainConfig>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: net.config().clone(),
            train: train.cloned(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerTensors {
                    weight: Tensor::new(l.weight_shape().to_vec(), &l.weight),
                    bias: Tensor::new(vec![l.out_ch], &l.bias),
                })
                .collect(),
        }
    }

    pub fn to_network<F: Real>(&self) -> Result<SpikingNetwork<F>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let &[out_ch, in_ch, kernel, k2] = t.weight.shape.as_slice() else {
                    return Err(Error::Checkpoint(format!("layer {i}: weight must be 4-D")));
                };
                if k2 != kernel || t.bias.shape != [out_ch] {
                    return Err(Error::Checkpoint(format!("layer {i}: inconsistent shapes")));
                }
                Ok(ConvLayer {
                    in_ch,
                    out_ch,
                    kernel,
                    weight: t.weight.values(&format!("layer {i} weight"))?,
                    bias: t.bias.values(&format!("layer {i} bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SpikingNetwork::from_layers(self.network.clone(), layers)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let mut text = ckpt.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}
