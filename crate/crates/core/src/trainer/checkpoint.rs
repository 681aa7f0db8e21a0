//! Versioned JSON checkpoints. Floats are written in shortest round-trip
//! form and parsed with correct rounding, so values survive bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::numeric::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder_config: EncoderConfig,
    pub train_config: Option<TrainConfig>,
    pub params: EncoderParams<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    format_version: u32,
    encoder_config: EncoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_config: Option<TrainConfig>,
    params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let params = EncoderParams::<f64>::names()
            .into_iter()
            .zip(self.params.items())
            .map(|(name, t)| {
                (
                    name,
                    StoredTensor {
                        shape: [t.rows(), t.cols()],
                        data: t.as_slice().to_vec(),
                    },
                )
            })
            .collect();
        let stored = Stored {
            format_version: FORMAT_VERSION,
            encoder_config: self.encoder_config,
            train_config: self.train_config,
            params,
        };
        Ok(serde_json::to_string(&stored)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let version = probe
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Checkpoint("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::Version(version as u32));
        }
        let mut stored: Stored = serde_json::from_value(probe)?;
        stored.encoder_config.validate()?;
        let mut tensors = Vec::new();
        for name in EncoderParams::<f64>::names() {
            let t = stored
                .params
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let [r, c] = t.shape;
            let tensor = Tensor::from_vec(r, c, t.data)
                .map_err(|_| Error::Checkpoint(format!("{name}: data length does not match shape")))?;
            tensors.push(tensor);
        }
        if let Some(extra) = stored.params.keys().next() {
            return Err(Error::Checkpoint(format!("unknown parameter {extra}")));
        }
        let params = EncoderParams::from_tensors(&stored.encoder_config, tensors)?;
        Ok(Self {
            encoder_config: stored.encoder_config,
            train_config: stored.train_config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fsutil::read_to_string(path)?)
    }
}
