//! Versioned JSON model artifacts.

use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Hyperparams, Model, Standardizer};

pub const ARTIFACT_FORMAT: &str = "cough-triage-model";
pub const ARTIFACT_VERSION: u32 = 1;

/// A trained model together with everything needed to score raw feature
/// vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub standardizer: Standardizer,
    pub model: Model,
}

impl ModelArtifact {
    pub fn new(model: Model, standardizer: Standardizer, hyperparams: Hyperparams, seed: u64) -> Self {
        Self {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            hyperparams,
            seed,
            standardizer,
            model,
        }
    }

    /// Standardises raw rows and scores them.
    pub fn predict_proba(&self, raw: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let x = self.standardizer.transform(raw)?;
        self.model.predict_proba(x.view())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: Self = serde_json::from_str(text)?;
        if artifact.format != ARTIFACT_FORMAT {
            return Err(Error::Artifact(format!("unknown format {:?}", artifact.format)));
        }
        if artifact.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported version {} (expected {ARTIFACT_VERSION})",
                artifact.version
            )));
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
