//! JSON checkpoints.
//!
//! A network serializes as
//! `{format_version, role, layer_sizes, head, leaky_slope, layers: [{weight, bias}]}`
//! with weights flattened row-major. A model file wraps several networks:
//! `{format_version, model_kind, step, networks: [...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Head, Layer, Mlp};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerArrays {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCheckpoint {
    pub format_version: u32,
    pub role: String,
    pub layer_sizes: Vec<usize>,
    pub head: Head,
    pub leaky_slope: f64,
    pub layers: Vec<LayerArrays>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub model_kind: String,
    pub step: u64,
    pub networks: Vec<NetworkCheckpoint>,
}

fn check_version(found: u32) -> Result<()> {
    if found != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    Ok(())
}

impl NetworkCheckpoint {
    pub fn from_mlp(net: &Mlp) -> Self {
        NetworkCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            role: net.role().to_string(),
            layer_sizes: net.sizes().to_vec(),
            head: net.head(),
            leaky_slope: net.leaky_slope(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerArrays {
                    weight: l.weight.data().to_vec(),
                    bias: l.bias.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        check_version(self.format_version)?;
        if self.layer_sizes.len() != self.layers.len() + 1 {
            return Err(Error::contract(format!(
                "network `{}` lists {} sizes for {} layers",
                self.role,
                self.layer_sizes.len(),
                self.layers.len()
            )));
        }
        let layers = self
            .layer_sizes
            .windows(2)
            .zip(&self.layers)
            .map(|(w, l)| {
                Ok(Layer {
                    weight: Tensor::matrix(w[0], w[1], l.weight.clone())?,
                    bias: Tensor::vector(l.bias.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(&self.role, layers, self.head, self.leaky_slope)
    }
}

impl ModelCheckpoint {
    pub fn new(model_kind: &str, step: u64, nets: &[&Mlp]) -> Self {
        ModelCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model_kind: model_kind.to_string(),
            step,
            networks: nets.iter().map(|n| NetworkCheckpoint::from_mlp(n)).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Peek at the version first so an unknown version is reported as such
        // rather than as a schema mismatch.
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        check_version(v.format_version)?;
        let ckpt: ModelCheckpoint = serde_json::from_str(text)?;
        for n in &ckpt.networks {
            check_version(n.format_version)?;
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        ModelCheckpoint::from_json(&text)
    }

    /// Network with the given role.
    pub fn network(&self, role: &str) -> Result<Mlp> {
        self.networks
            .iter()
            .find(|n| n.role == role)
            .ok_or_else(|| Error::contract(format!("checkpoint has no `{role}` network")))?
            .to_mlp()
    }
}
