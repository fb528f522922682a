//! Run configuration: one TOML file plus `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{SynthConfig, World};
use crate::error::{Error, Result};
use crate::evaluation::PrimitiveTop1;
use crate::integrator::IntegratorConfig;
use crate::model::{ModelConfig, ModelKind, PromptInit};
use crate::training::{config_hash, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: Option<PathBuf>,
    /// Generator ground truth written next to a synthetic manifest.
    pub latent: Option<PathBuf>,
    pub synth: SynthConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Precomputed features through a fixed linear map.
    Synthetic,
    /// A real image-text model behind an adapter; not bundled.
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabSource {
    /// Generator prototypes when a latent file is available, else words.
    Auto,
    Latent,
    Words,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    pub kind: BackboneKind,
    /// Output width of a random projection; `None` keeps the feature width
    /// with an identity map.
    pub embed_dim: Option<usize>,
    pub projection_seed: u64,
    pub vocab_source: VocabSource,
    pub word_seed: u64,
}

impl Default for BackboneSection {
    fn default() -> Self {
        Self {
            kind: BackboneKind::Synthetic,
            embed_dim: None,
            projection_seed: 0,
            vocab_source: VocabSource::Auto,
            word_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub context_len: usize,
    pub prompt_init: PromptInit,
    pub prompt_init_std: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            kind: m.kind,
            context_len: m.context_len,
            prompt_init: m.prompt_init,
            prompt_init_std: m.prompt_init_std,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldChoice {
    Closed,
    Open,
    Both,
}

impl WorldChoice {
    pub fn worlds(self) -> Vec<World> {
        match self {
            WorldChoice::Closed => vec![World::Closed],
            WorldChoice::Open => vec![World::Open],
            WorldChoice::Both => vec![World::Closed, World::Open],
        }
    }
}

impl std::str::FromStr for WorldChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(WorldChoice::Closed),
            "open" => Ok(WorldChoice::Open),
            "both" => Ok(WorldChoice::Both),
            other => Err(Error::InvalidConfig(format!("unknown world `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub world: WorldChoice,
    pub primitive_top1: PrimitiveTop1,
    pub split: crate::data::Split,
    /// Also write per-instance records as NDJSON.
    pub dump_instances: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            world: WorldChoice::Both,
            primitive_top1: PrimitiveTop1::Composition,
            split: crate::data::Split::Test,
            dump_instances: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub samples: usize,
    pub warmup: usize,
    /// Also time the composition-branch baseline.
    pub baseline: bool,
    /// Vocabulary sizes for the call-count and FLOP accounting; default to
    /// the manifest's.
    pub num_attributes: Option<usize>,
    pub num_objects: Option<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            samples: 100,
            warmup: 10,
            baseline: true,
            num_attributes: None,
            num_objects: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub backbone: BackboneSection,
    pub model: ModelSection,
    pub integrator: IntegratorConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("runs/default"),
            data: DataSection::default(),
            backbone: BackboneSection::default(),
            model: ModelSection::default(),
            integrator: IntegratorConfig::default(),
            training: TrainConfig::default(),
            evaluation: EvaluationSection::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::InvalidConfig(format!("bad override key `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("`{key}` in `{path}` is not a section")))?;
    }
    table.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads `path` (or the defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synth.validate()?;
        self.training.validate()?;
        if self.model.context_len == 0 {
            return Err(Error::InvalidConfig("model.context_len must be at least 1".into()));
        }
        if self.bench.samples == 0 {
            return Err(Error::InvalidConfig("bench.samples must be at least 1".into()));
        }
        if self.backbone.embed_dim == Some(0) {
            return Err(Error::InvalidConfig("backbone.embed_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model.kind,
            context_len: self.model.context_len,
            prompt_init: self.model.prompt_init,
            prompt_init_std: self.model.prompt_init_std,
            integrator: self.integrator.clone(),
        }
    }

    /// Hash of everything that shapes a trained checkpoint; evaluation and
    /// bench settings are excluded.
    pub fn training_hash(&self) -> Result<String> {
        config_hash(&(
            self.seed,
            &self.data,
            &self.backbone,
            &self.model,
            &self.integrator,
            &self.training,
        ))
    }
}
