//! Model checkpoints.
//!
//! A checkpoint is a JSON document:
//!
//! ```text
//! {"format": "alconf-model", "version": 1, "model": {
//!     "layers": [{"weights": {"v":1,"dim":[in,out],"data":[...]}, "bias": {...} | null}, ...],
//!     "head": "softmax" | "inhibited_softmax" | "evidential",
//!     "loss": {"kind": "cross_entropy" | ...},
//!     "dropout_rate": 0.1, "trained": true}}
//! ```
//!
//! Weight matrices are row-major `fan_in × fan_out`. Floats are written in
//! shortest round-trip form, so loading restores every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LearnerModel;
use crate::error::{Error, Result};

const FORMAT: &str = "alconf-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint<M> {
    format: String,
    version: u32,
    model: M,
}

impl LearnerModel {
    pub fn to_checkpoint(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            model: self,
        })
        .expect("model serializes")
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: Checkpoint<LearnerModel> = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        let model = ck.model;
        let shapes_chain = model
            .layers
            .windows(2)
            .all(|w| w[0].weights.ncols() == w[1].weights.nrows());
        let biases_match = model
            .layers
            .iter()
            .all(|l| l.bias.as_ref().is_none_or(|b| b.len() == l.weights.ncols()));
        if model.layers.is_empty() || !shapes_chain || !biases_match {
            return Err(Error::Checkpoint("inconsistent layer shapes".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}
