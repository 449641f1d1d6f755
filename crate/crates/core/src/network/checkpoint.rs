//! Versioned JSON checkpoint of a [`NetworkModel`].
//!
//! ```text
//! {
//!   "format": "msth-checkpoint",
//!   "version": 1,
//!   "config_hash": "<sha256 of the resolved config>",
//!   "regulation_enabled": true,
//!   "scales": { "ultra": true, "fast": true, "medium": true, "slow": true },
//!   "coordination": true,
//!   "layers": [
//!     { "rows": 32, "cols": 2, "activation": "relu",
//!       "weights": [...row-major...], "bias": [...],
//!       "state": { "activations": [...], "calcium": [...], "activity_accum": 0.0,
//!                  "accum_steps": 0, "perf_accumulator": [...] } }
//!   ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load → save is
//! byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};
use crate::numerics::Mat;
use crate::regulators::NeuronState;

use super::{Activation, HomeostaticLayer, NetworkModel, ScaleSwitches};

pub const CHECKPOINT_FORMAT: &str = "msth-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub state: NeuronState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub regulation_enabled: bool,
    pub scales: ScaleSwitches,
    pub coordination: bool,
    pub layers: Vec<LayerSnapshot>,
}

impl Checkpoint {
    pub fn from_model(model: &NetworkModel, config_hash: &str) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            regulation_enabled: model.regulation_enabled,
            scales: model.scales,
            coordination: model.coordination,
            layers: model
                .layers
                .iter()
                .map(|l| LayerSnapshot {
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    activation: l.activation,
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.clone(),
                    state: l.state.clone(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<NetworkModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(MsthError::Checkpoint(format!(
                "unknown format {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(MsthError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|s| {
                let w = Mat::from_vec(s.rows, s.cols, s.weights.clone())?;
                if s.bias.len() != s.rows || s.state.width() != s.rows {
                    return Err(MsthError::Checkpoint(
                        "layer state does not match weight rows".into(),
                    ));
                }
                Ok(HomeostaticLayer {
                    weights: w,
                    bias: s.bias.clone(),
                    state: s.state.clone(),
                    activation: s.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = NetworkModel::new(layers)?;
        model.regulation_enabled = self.regulation_enabled;
        model.scales = self.scales;
        model.coordination = self.coordination;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| MsthError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MsthError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut model = NetworkModel::init(&[3, 7, 2], Activation::Relu, 5, 0.5).unwrap();
        model.layers[0].state.perf_accumulator = vec![1.0 / 3.0, 0.1 + 0.2];
        model.layers[1].state.calcium[0] = std::f64::consts::PI / 10.0;
        let cp = Checkpoint::from_model(&model, "abc");
        let text = cp.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back.to_model().unwrap(), model);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_unknown_version() {
        let model = NetworkModel::init(&[2, 2], Activation::Relu, 5, 0.5).unwrap();
        let mut cp = Checkpoint::from_model(&model, "x");
        cp.version = 99;
        assert!(matches!(cp.to_model(), Err(MsthError::Checkpoint(_))));
    }
}
