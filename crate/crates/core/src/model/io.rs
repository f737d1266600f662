use std::fs;
use std::path::Path;

use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{LayerParams, ModelError, Network, NonNegMap};

pub const MODEL_FORMAT: &str = "monocif-model";
pub const MODEL_VERSION: u32 = 1;

/// On-disk layout. Floats use shortest round-trip decimal, so reading back
/// reproduces every bit.
#[derive(Serialize, Deserialize)]
struct ModelDocument<T> {
    format: String,
    version: u32,
    input_dim: usize,
    widths: Vec<usize>,
    t_scale: T,
    delta_g: T,
    nonneg: NonNegMap,
    layers: Vec<LayerParams<T>>,
}

impl<T: Float + Serialize + DeserializeOwned> Network<T> {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            input_dim: self.input_dim,
            widths: self.widths(),
            t_scale: self.t_scale,
            delta_g: self.delta_g,
            nonneg: self.nonneg,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument<T> = serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(ModelError::Format(format!("unexpected format tag {:?}", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(ModelError::Format(format!("unsupported version {}", doc.version)));
        }
        let net = Network {
            input_dim: doc.input_dim,
            layers: doc.layers,
            t_scale: doc.t_scale,
            delta_g: doc.delta_g,
            nonneg: doc.nonneg,
        };
        if net.widths() != doc.widths {
            return Err(ModelError::Format(format!("widths {:?} disagree with layers {:?}", doc.widths, net.widths())));
        }
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
