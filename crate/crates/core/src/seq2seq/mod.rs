//! To-Do generation: encoder input layout, an attentional LSTM
//! encoder-decoder with optional copying over the extended vocabulary, a
//! two-encoder (bifocal) variant, training and beam search.

mod beam;
mod input;
mod model;
mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use todo_numeric::NumericError;

use crate::artifact::{save_model_dir, ArtifactError, ModelDir};
use crate::text::{TextError, Vocabulary};

pub use beam::{beam_search, beam_search_with, greedy_decode, Hypothesis, DEFAULT_BEAM_WIDTH, DEFAULT_MAX_DECODE_LEN};
pub use input::{concatenate_baseline, serialize_input, EncoderInput, ExtendedVocab, MAX_SOURCE_LEN};
pub use model::{
    attention_step, bifocal_mixture, copy_mixture, Attention, Dropout, Encoded, Head, Seq2SeqModel, StepOutput,
};
pub use train::{
    build_model, build_vocabularies, evaluate_teacher_forced, init_embeddings, run_early_stopping, train,
    EarlyStopping, EpochRecord, Example, Observation, TrainConfig, TrainLog,
};

const SOURCE_VOCAB: &str = "source_vocab.txt";
const TARGET_VOCAB: &str = "target_vocab.txt";

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error("instance has no commitment sentence at its index")]
    MissingCommitment,
    #[error("empty encoder input")]
    EmptyInput,
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("operation needs a {expected} model, this one is {found}")]
    WrongVariant { expected: Variant, found: Variant },
    #[error("unknown variant `{0}` (expected vanilla, copy or bifocal)")]
    UnknownVariant(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged in epoch {epoch}: non-finite value in {op}")]
    Diverged { epoch: usize, op: &'static str },
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Vanilla,
    Copy,
    Bifocal,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vanilla, Variant::Copy, Variant::Bifocal];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Copy => "copy",
            Variant::Bifocal => "bifocal",
        }
    }

    fn kind(self) -> String {
        format!("seq2seq-{}", self.name())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Seq2SeqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Seq2SeqError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    /// Minimum training count for both vocabularies.
    pub min_count: usize,
    pub init_range: f64,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Copy,
            embed_dim: 100,
            hidden: 256,
            attention_dim: 256,
            min_count: 2,
            init_range: 0.3,
            max_source_len: MAX_SOURCE_LEN,
            max_target_len: 60,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        let sizes = [self.embed_dim, self.hidden, self.attention_dim, self.min_count, self.max_source_len, self.max_target_len];
        if sizes.contains(&0) {
            return Err(Seq2SeqError::InvalidConfig("sizes, min_count and length limits must be positive".into()));
        }
        if !(self.init_range > 0.0) {
            return Err(Seq2SeqError::InvalidConfig("init_range must be positive".into()));
        }
        Ok(())
    }
}

impl Seq2SeqModel {
    pub fn save(&self, dir: &Path) -> Result<(), Seq2SeqError> {
        let config = serde_json::to_value(&self.config).map_err(|e| ArtifactError::Manifest(e.to_string()))?;
        let files = [(SOURCE_VOCAB, self.source_vocab.to_text()), (TARGET_VOCAB, self.target_vocab.to_text())];
        save_model_dir(dir, &self.variant().kind(), &self.params, &files, config)?;
        Ok(())
    }

    /// Loads a model directory of any variant.
    pub fn load(dir: &Path) -> Result<Self, Seq2SeqError> {
        let manifest = std::fs::read_to_string(dir.join(crate::artifact::MANIFEST)).map_err(|source| ArtifactError::Io {
            path: dir.join(crate::artifact::MANIFEST).display().to_string(),
            source,
        })?;
        let manifest: crate::artifact::Manifest =
            serde_json::from_str(&manifest).map_err(|e| ArtifactError::Manifest(e.to_string()))?;
        let variant = Variant::ALL
            .into_iter()
            .find(|v| v.kind() == manifest.kind)
            .ok_or_else(|| ArtifactError::WrongKind { expected: "seq2seq-*".into(), found: manifest.kind.clone() })?;
        let m = ModelDir::open(dir, &variant.kind())?;
        let source = Vocabulary::from_text(&m.read_text(SOURCE_VOCAB)?)?;
        let target = Vocabulary::from_text(&m.read_text(TARGET_VOCAB)?)?;
        let config: ModelConfig = m.config()?;
        let mut model = Seq2SeqModel::new(config, source, target)?;
        m.checkpoint.load_into(&mut model.params)?;
        Ok(model)
    }
}
