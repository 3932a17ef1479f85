//! Versioned JSON snapshots of a model.

use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{OdaError, Result};
use crate::model::{LevelRecord, OdaModel, Prototype, Schedule};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeEntry {
    pub mu: Vec<f64>,
    pub label: Option<String>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub version: u32,
    pub divergence: Divergence,
    pub temperature: f64,
    pub schedule: Schedule,
    pub prototypes: Vec<PrototypeEntry>,
    pub history: Vec<LevelRecord>,
}

impl ModelSnapshot {
    pub fn of(model: &OdaModel) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            divergence: model.divergence,
            temperature: model.temperature,
            schedule: model.schedule.clone(),
            prototypes: model
                .prototypes
                .iter()
                .map(|p| PrototypeEntry {
                    mu: p.mu.clone(),
                    label: p.label.clone(),
                    rho: p.rho,
                })
                .collect(),
            history: model.history.clone(),
        }
    }

    /// Rebuilds a model; `seed` drives any further perturbations.
    pub fn into_model(self, seed: u64) -> Result<OdaModel> {
        if self.version != SNAPSHOT_VERSION {
            return Err(OdaError::Snapshot(format!(
                "unsupported snapshot version {}",
                self.version
            )));
        }
        let protos = self
            .prototypes
            .into_iter()
            .map(|p| Prototype::new(p.mu, p.label, p.rho))
            .collect();
        let mut model = OdaModel::from_prototypes(self.divergence, self.schedule, protos, seed)?;
        model.temperature = self.temperature;
        model.level_index = self.history.len();
        model.history = self.history;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| OdaError::Snapshot(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| OdaError::Snapshot(e.to_string()))
    }
}
