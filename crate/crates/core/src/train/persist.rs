use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::nn::{Model, ModelConfig};

pub const PARAM_FORMAT: &str = "leap-params";
pub const PARAM_VERSION: u32 = 1;

/// Versioned JSON snapshot of a model: its configuration, the seed and every
/// parameter with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub model: ModelConfig,
    pub params: ParamStore,
}

impl ParamFile {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format: PARAM_FORMAT.into(),
            version: PARAM_VERSION,
            seed: model.config.seed,
            model: model.config.clone(),
            params: model.store.clone(),
        }
    }

    /// Rebuilds the model and loads every stored parameter into it.
    pub fn to_model(&self) -> Result<Model> {
        self.check()?;
        let mut model = Model::new(self.model.clone())?;
        let copied = model.store.load_matching(&self.params)?;
        if copied != model.store.len() || copied != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter file holds {} parameters, model expects {}",
                self.params.len(),
                model.store.len()
            )));
        }
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.format != PARAM_FORMAT {
            return Err(Error::InvalidArgument(format!("not a parameter file: format `{}`", self.format)));
        }
        if self.version != PARAM_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported parameter file version {}",
                self.version
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        file.check()?;
        Ok(file)
    }
}
