use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commitment::ClassifierConfig;
use crate::corpus::DEFAULT_RATIOS;
use crate::selection::{WordVectorConfig, DEFAULT_TAU};
use crate::seq2seq::{ModelConfig, TrainConfig, Variant};

use super::HarnessError;

/// Prefix of environment overrides: `SMART_TODO__SELECTION__K=3` sets
/// `selection.k`. Values are read as TOML scalars, falling back to strings.
pub const ENV_PREFIX: &str = "SMART_TODO__";

pub const PROVIDERS: [&str; 4] = ["tf", "wv-mean", "wv-max", "file"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus records; a synthetic corpus is generated when absent.
    pub corpus: Option<PathBuf>,
    /// Word vectors for the `wv-*` providers and embedding init; trained
    /// on the corpus when absent.
    pub word_vectors: Option<PathBuf>,
    /// Precomputed sentence vectors for the `file` provider.
    pub sentence_vectors: Option<PathBuf>,
    pub checkpoints: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            word_vectors: None,
            sentence_vectors: None,
            checkpoints: PathBuf::from("checkpoints"),
            output: PathBuf::from("output"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_instances: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n_instances: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratios: DEFAULT_RATIOS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommitmentSection {
    pub threshold: f64,
    pub model: ClassifierConfig,
}

impl Default for CommitmentSection {
    fn default() -> Self {
        Self { threshold: 0.9, model: ClassifierConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub tau: usize,
    pub k: usize,
    pub provider: String,
    pub word_vectors: WordVectorConfig,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            k: 2,
            provider: "wv-max".into(),
            word_vectors: WordVectorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    /// Variant used by `train-gen`, `generate` and `pipeline`.
    pub variant: Variant,
    /// Variants trained by the experiment, reported in this fixed order.
    pub experiment_variants: Vec<Variant>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for GenerationSection {
    fn default() -> Self {
        Self {
            variant: Variant::Copy,
            experiment_variants: Variant::ALL.to_vec(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Everything a run needs. Per-stage seeds are derived from `seed`; the
/// `seed` fields inside the stage sections are overwritten.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthSection,
    pub split: SplitSection,
    pub commitment: CommitmentSection,
    pub selection: SelectionSection,
    pub generation: GenerationSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, HarnessError> {
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads `path` (defaults when `None`) and applies overrides from
    /// `vars`, usually `std::env::vars()`.
    pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, HarnessError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, vars)?;
        let cfg = Self::from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(0.0..=1.0).contains(&self.commitment.threshold) {
            return bad(format!("commitment.threshold {} outside [0, 1]", self.commitment.threshold));
        }
        if self.selection.k == 0 || self.selection.tau == 0 {
            return bad("selection.k and selection.tau must be positive".into());
        }
        if !PROVIDERS.contains(&self.selection.provider.as_str()) {
            return bad(format!("selection.provider `{}` is not one of {}", self.selection.provider, PROVIDERS.join(", ")));
        }
        if self.selection.provider == "file" && self.paths.sentence_vectors.is_none() {
            return bad("selection.provider `file` needs paths.sentence_vectors".into());
        }
        if self.paths.corpus.is_none() && self.synth.n_instances < 3 {
            return bad("synth.n_instances must be at least 3".into());
        }
        if self.generation.experiment_variants.is_empty() {
            return bad("generation.experiment_variants is empty".into());
        }
        self.commitment.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.generation.model.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.generation.train.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Fails unless every configured input file exists.
    pub fn check_paths(&self) -> Result<(), HarnessError> {
        let inputs = [&self.paths.corpus, &self.paths.word_vectors, &self.paths.sentence_vectors, &self.generation.train.embedding_file];
        for p in inputs.into_iter().flatten() {
            if !p.is_file() {
                return Err(HarnessError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

fn apply_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), HarnessError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(HarnessError::Config(format!("malformed override {key}")));
        }
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw));
        let mut node = &mut *table;
        for seg in &path[..path.len() - 1] {
            let entry = node.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| HarnessError::Config(format!("override {key}: `{seg}` is not a section")))?;
        }
        node.insert(path[path.len() - 1].clone(), value);
    }
    Ok(())
}
