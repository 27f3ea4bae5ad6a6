//! Versioned checkpoint documents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Catalog;
use crate::dialogue::DialogueConfig;
use crate::error::{Error, Result};
use crate::simulator::RewardConfig;
use crate::training::{Agent, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub catalog: Catalog,
    pub catalog_fingerprint: String,
    /// Graph, Bayes-net logits, inquiry matrices, switcher and critic.
    pub agent: Agent,
    pub dialogue: DialogueConfig,
    pub train: TrainConfig,
    pub rewards: RewardConfig,
    /// Root seed everything in the run was derived from.
    pub seed: u64,
    /// Episode at which this snapshot was taken.
    pub episode: u64,
}

impl Checkpoint {
    pub fn new(
        catalog: Catalog,
        agent: Agent,
        dialogue: DialogueConfig,
        train: TrainConfig,
        rewards: RewardConfig,
        episode: u64,
    ) -> Self {
        Self {
            version: FORMAT_VERSION,
            catalog_fingerprint: catalog.fingerprint(),
            catalog,
            agent,
            dialogue,
            seed: train.seed,
            train,
            rewards,
            episode,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        if self.catalog.fingerprint() != self.catalog_fingerprint {
            return Err(Error::Checkpoint("catalog fingerprint mismatch".into()));
        }
        let model = &self.agent.model;
        if model.num_diseases() != self.catalog.num_diseases() || model.num_symptoms() != self.catalog.num_symptoms() {
            return Err(Error::Checkpoint("model dimensions do not match catalog".into()));
        }
        model.bayes.check_shape(&model.graph)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the serialized document.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}
