//! Run configuration, seeding and the persisted model bundle.

use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::concepts::{generate_concepts, ConceptSet, Generated, SelectionConfig, TemplateConfig};
use crate::data::{preprocess, Dataset, PreprocessStats};
use crate::error::{Error, Result};
use crate::explain::ExplainConfig;
use crate::model::{fit, Model, ModelConfig, ModelState, Prediction, TrainConfig, TrainHistory};
use crate::stl::Trajectory;

pub const BUNDLE_VERSION: u32 = 1;

/// Offsets added to the root seed for each seeded component.
pub const SELECTION_SEED_OFFSET: u64 = 0;
pub const KERNEL_SEED_OFFSET: u64 = 1;
pub const TRAIN_SEED_OFFSET: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub correlation_threshold: f64,
    pub templates: TemplateConfig,
    pub selection: SelectionConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            correlation_threshold: 0.9,
            templates: TemplateConfig::default(),
            selection: SelectionConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Sets the root seed and derives every component seed from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.selection.seed = seed.wrapping_add(SELECTION_SEED_OFFSET);
        self.model.kernel.mu0.seed = seed.wrapping_add(KERNEL_SEED_OFFSET);
        self.train.seed = seed.wrapping_add(TRAIN_SEED_OFFSET);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(Error::InvalidParam("correlation threshold must lie in (0, 1]".into()));
        }
        self.templates.validate()?;
        self.selection.validate()?;
        self.model.kernel.validate()?;
        self.train.validate()?;
        self.explain.validate()
    }
}

/// Everything `predict` and the explainers need: the resolved configuration,
/// the train-fitted preprocessing, the label map and the model state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub version: u32,
    pub config: RunConfig,
    pub source_channel_names: Vec<String>,
    pub label_map: Vec<String>,
    pub preprocess: PreprocessStats,
    pub state: ModelState,
}

impl Bundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Bundle> {
        let b: Bundle = serde_json::from_str(s)?;
        if b.version != BUNDLE_VERSION {
            return Err(Error::Data(format!("unsupported bundle version {}", b.version)));
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Bundle> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Bundle::from_json(&s)
    }
}

/// A loaded bundle with its model rebuilt.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub bundle: Bundle,
    pub model: Model,
}

impl Pipeline {
    pub fn from_bundle(bundle: Bundle) -> Result<Pipeline> {
        let model = Model::from_state(bundle.state.clone())?;
        Ok(Pipeline { bundle, model })
    }

    pub fn load(path: &Path) -> Result<Pipeline> {
        Pipeline::from_bundle(Bundle::load(path)?)
    }

    /// Applies the training preprocessing to raw trajectories.
    pub fn prepare(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.channels() != self.bundle.preprocess.source_channels {
            return Err(Error::Shape(format!(
                "data has {} channels, model expects {}",
                ds.channels(),
                self.bundle.preprocess.source_channels
            )));
        }
        if ds.length() != self.bundle.state.length {
            return Err(Error::Shape(format!("data has length {}, model expects {}", ds.length(), self.bundle.state.length)));
        }
        Ok(preprocess(ds, Some(&self.bundle.preprocess), self.bundle.config.correlation_threshold)?.0)
    }

    /// Predictions for already prepared trajectories.
    pub fn predict(&self, taus: &[Trajectory]) -> Result<Vec<Prediction>> {
        use rayon::prelude::*;
        taus.par_iter().map(|t| self.model.predict(t)).collect()
    }
}

/// Preprocesses the training set and mines concepts on it.
pub fn mine_concepts(train: &Dataset, cfg: &RunConfig) -> Result<(Generated, Dataset)> {
    cfg.validate()?;
    info!("run config: {}", serde_json::to_string(cfg)?);
    mine(train, cfg)
}

fn mine(train: &Dataset, cfg: &RunConfig) -> Result<(Generated, Dataset)> {
    let (prepared, _) = preprocess(train, None, cfg.correlation_threshold)?;
    let tcfg = TemplateConfig { channels: prepared.channels(), ..cfg.templates };
    let generated = generate_concepts(&prepared.trajectories, &tcfg, &cfg.selection)?;
    info!(
        "selected {} concepts from {} candidates{}",
        generated.concepts.len(),
        generated.candidates_seen,
        if generated.exhausted { " (stream exhausted before target)" } else { "" }
    );
    Ok((generated, prepared))
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub pipeline: Pipeline,
    pub history: TrainHistory,
    /// The training set after preprocessing.
    pub train: Dataset,
}

/// Preprocesses, mines concepts unless supplied, and fits the model.
pub fn train_pipeline(train: &Dataset, concepts: Option<&ConceptSet>, cfg: &RunConfig) -> Result<Trained> {
    cfg.validate()?;
    info!("run config: {}", serde_json::to_string(cfg)?);
    let (prepared, stats) = preprocess(train, None, cfg.correlation_threshold)?;
    let concepts = match concepts {
        Some(c) if c.source_length() == prepared.length() => c.clone(),
        Some(c) => c.rescaled(prepared.length()),
        None => mine(train, cfg)?.0.concepts,
    };
    let (model, history) = fit(&prepared.trajectories, &concepts, &cfg.model, &cfg.train)?;
    let bundle = Bundle {
        version: BUNDLE_VERSION,
        config: cfg.clone(),
        source_channel_names: train.channel_names.clone(),
        label_map: train.label_map.clone(),
        preprocess: stats,
        state: model.into_state(),
    };
    Ok(Trained { pipeline: Pipeline::from_bundle(bundle)?, history, train: prepared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_derive_from_root() {
        let c = RunConfig::default().with_seed(40);
        assert_eq!((c.selection.seed, c.model.kernel.mu0.seed, c.train.seed), (40, 41, 42));
        assert!(c.validate().is_ok());
    }
}
