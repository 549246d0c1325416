//! TOML run configuration and layout resolution.
//!
//! Every key is optional; command-line flags override the file. Example:
//!
//! ```toml
//! preset = "epr-2x2"        # or: layout = "layout.json"
//! out = "runs/2x2"
//! charts = true
//! seed = 7
//! n_trials = 400000         # gen-data
//! data = "runs/2x2/dataset.csv"   # train
//! model = "runs/2x2/model.json"   # eval, sweep
//! temp = 1.0                # eval
//! t_start = 1.0             # sweep
//! t_end = 0.1
//! steps = 10
//!
//! [training]                # any TrainingConfig field
//! mode = "pcd"
//! learning_rate = 0.05
//! epochs = 200
//! ```

use std::path::{Path, PathBuf};

use bellcrbm::io::{DatasetFile, LayoutFile};
use bellcrbm::{ConditioningLayout, Preset, TrainingConfig};
use serde::Deserialize;

use crate::{Common, Failure};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub layout: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub charts: Option<bool>,
    pub seed: Option<u64>,
    pub n_trials: Option<usize>,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub temp: Option<f64>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub steps: Option<usize>,
    pub training: Option<toml::Table>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// The `[training]` table over the defaults, and whether it sets `n_hidden`.
    pub fn training_config(&self) -> Result<(TrainingConfig, bool), Failure> {
        match &self.training {
            None => Ok((TrainingConfig::default(), false)),
            Some(table) => {
                let cfg = toml::Value::Table(table.clone())
                    .try_into::<TrainingConfig>()
                    .map_err(|e| Failure::usage(format!("invalid [training] section: {e}")))?;
                Ok((cfg, table.contains_key("n_hidden")))
            }
        }
    }
}

/// Layout chosen for a run, with a description and a hidden-unit hint.
pub struct ResolvedLayout {
    pub layout: ConditioningLayout,
    pub source: String,
    pub n_hidden: Option<usize>,
}

impl ResolvedLayout {
    /// Flags first, then the config file, then a dataset header, then `epr-2x2`.
    pub fn resolve(common: &Common, file: &ConfigFile, dataset: Option<&DatasetFile>) -> Result<Self, Failure> {
        if let Some(name) = &common.preset {
            return Self::preset(name);
        }
        if let Some(path) = &common.layout {
            return Self::layout_file(path);
        }
        if let Some(name) = &file.preset {
            return Self::preset(name);
        }
        if let Some(path) = &file.layout {
            return Self::layout_file(path);
        }
        if let Some(layout) = dataset.and_then(|d| d.layout.clone()) {
            // a preset's layout keeps its hidden-unit count
            let preset = Preset::ALL.into_iter().find(|p| p.layout() == layout);
            return Ok(Self {
                layout,
                source: "dataset header".into(),
                n_hidden: preset.map(Preset::n_hidden),
            });
        }
        Self::preset(Preset::Epr2x2.name())
    }

    fn preset(name: &str) -> Result<Self, Failure> {
        let preset: Preset = name.parse().map_err(|e: bellcrbm::Error| Failure::usage(e.to_string()))?;
        Ok(Self {
            layout: preset.layout(),
            source: format!("preset {}", preset.name()),
            n_hidden: Some(preset.n_hidden()),
        })
    }

    fn layout_file(path: &Path) -> Result<Self, Failure> {
        let file = LayoutFile::load(path).map_err(|e| match e {
            bellcrbm::Error::Io(_) => Failure::io(format!("cannot read layout {}: {e}", path.display())),
            other => Failure::usage(format!("invalid layout {}: {other}", path.display())),
        })?;
        Ok(Self {
            layout: file.to_layout()?,
            source: format!("layout file {}", path.display()),
            n_hidden: file.n_hidden,
        })
    }
}
