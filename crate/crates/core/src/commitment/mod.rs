//! Commitment-sentence classifier: an LSTM over
//! `[sentence ; <sent> ; context]`, additive self-attention pooling and a
//! single logit.

mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use todo_numeric::{Initializer, Linear, LstmCell, NumericError, ParamId, ParamSet, Tape, Var};

use crate::artifact::{save_model_dir, ArtifactError, ModelDir};
use crate::corpus::EmailMessage;
use crate::text::{tokenize, TextError, Vocabulary, SENT};

pub use train::{
    balance, evaluate_classifier, extract_candidates, labeled_sentences, train_classifier, Candidate,
    ClassifierMetrics, ClassifierTrainLog,
};

pub const KIND: &str = "commitment-classifier";
const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Error)]
pub enum CommitmentError {
    #[error("training data needs at least 2 examples of each class (got {positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("empty sentence")]
    EmptySentence,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    /// Context tokens kept after the separator.
    pub max_context: usize,
    pub min_count: usize,
    pub init_range: f64,
    pub learning_rate: f64,
    pub accumulator_init: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            hidden: 128,
            attention_dim: 128,
            max_context: 256,
            min_count: 1,
            init_range: 0.3,
            learning_rate: 0.15,
            accumulator_init: 0.1,
            max_grad_norm: 2.0,
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), CommitmentError> {
        let sizes = [self.embed_dim, self.hidden, self.attention_dim, self.batch_size, self.patience, self.min_count];
        if sizes.contains(&0) {
            return Err(CommitmentError::InvalidConfig("sizes, batch, patience and min_count must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.accumulator_init > 0.0 && self.max_grad_norm > 0.0 && self.init_range > 0.0) {
            return Err(CommitmentError::InvalidConfig("rates, norms and init range must be positive".into()));
        }
        Ok(())
    }
}

/// A sentence to classify with the tokens of the rest of its email.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub context: Vec<String>,
    pub label: bool,
}

#[derive(Clone, Debug)]
pub struct CommitmentClassifier {
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub config: ClassifierConfig,
    embedding: ParamId,
    lstm: LstmCell,
    attention: Linear,
    attention_v: ParamId,
    output: Linear,
}

impl CommitmentClassifier {
    pub fn new(vocab: Vocabulary, config: ClassifierConfig) -> Result<Self, CommitmentError> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut init = Initializer::new(config.seed);
        let r = config.init_range;
        let embedding = params.add_uniform("embedding", &[vocab.len(), config.embed_dim], r, &mut init)?;
        let lstm = LstmCell::new(&mut params, "encoder", config.embed_dim, config.hidden, r, &mut init)?;
        // forget gate starts open
        params.value_mut(lstm.bias).data_mut()[config.hidden..2 * config.hidden].fill(1.0);
        let attention = Linear::new(&mut params, "attention", config.hidden, config.attention_dim, true, r, &mut init)?;
        let attention_v = params.add_uniform("attention.v", &[config.attention_dim, 1], r, &mut init)?;
        let output = Linear::new(&mut params, "output", config.hidden, 1, true, r, &mut init)?;
        Ok(Self {
            vocab,
            params,
            config,
            embedding,
            lstm,
            attention,
            attention_v,
            output,
        })
    }

    pub fn output_layer(&self) -> &Linear {
        &self.output
    }

    /// Ids of `sentence ++ <sent> ++ context[..max_context]`; with an empty
    /// context the separator is left out.
    pub fn input_ids(&self, sentence: &[String], context: &[String]) -> Result<Vec<usize>, CommitmentError> {
        if sentence.is_empty() {
            return Err(CommitmentError::EmptySentence);
        }
        let mut ids: Vec<usize> = sentence.iter().map(|t| self.vocab.id_or_unk(t)).collect();
        if !context.is_empty() {
            ids.push(self.vocab.id_or_unk(SENT));
            ids.extend(context.iter().take(self.config.max_context).map(|t| self.vocab.id_or_unk(t)));
        }
        Ok(ids)
    }

    /// Returns the logit and the `[1, T]` attention weights.
    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, ids: &[usize]) -> Result<(Var, Var), CommitmentError> {
        let table = tape.param(params, self.embedding);
        let xs = tape.embedding(table, ids)?;
        let init = self.lstm.zero_state(tape)?;
        let (states, _) = self.lstm.run(tape, params, xs, init)?;
        let hs: Vec<Var> = states.iter().map(|s| s.h).collect();
        let h = tape.concat(&hs, 0)?;
        let proj = self.attention.forward(tape, params, h)?;
        let proj = tape.tanh(proj)?;
        let v = tape.param(params, self.attention_v);
        let scores = tape.matmul(proj, v)?;
        let scores = tape.transpose(scores)?;
        let weights = tape.softmax(scores)?;
        let pooled = tape.matmul(weights, h)?;
        let logit = self.output.forward(tape, params, pooled)?;
        Ok((logit, weights))
    }

    /// Binary cross-entropy of one example, for training and gradient checks.
    pub fn loss(&self, tape: &mut Tape, params: &ParamSet, example: &LabeledSentence) -> Result<Var, CommitmentError> {
        let ids = self.input_ids(&example.tokens, &example.context)?;
        let (logit, _) = self.forward(tape, params, &ids)?;
        Ok(tape.bce_logits(logit, if example.label { 1.0 } else { 0.0 })?)
    }

    /// Probability that `sentence` is a commitment, given its email context.
    pub fn score(&self, sentence: &[String], context: &[String]) -> Result<f64, CommitmentError> {
        let ids = self.input_ids(sentence, context)?;
        let mut tape = Tape::new();
        let (logit, _) = self.forward(&mut tape, &self.params, &ids)?;
        let z = tape.value(logit).item();
        Ok(1.0 / (1.0 + (-z).exp()))
    }

    pub fn attention_weights(&self, sentence: &[String], context: &[String]) -> Result<Vec<f64>, CommitmentError> {
        let ids = self.input_ids(sentence, context)?;
        let mut tape = Tape::new();
        let (_, w) = self.forward(&mut tape, &self.params, &ids)?;
        Ok(tape.value(w).data().to_vec())
    }

    /// Scores every sentence of an email body.
    pub fn score_email(&self, email: &EmailMessage) -> Result<Vec<f64>, CommitmentError> {
        let sentences: Vec<Vec<String>> = email.sentences().iter().map(|s| tokenize(s)).collect();
        (0..sentences.len())
            .map(|i| self.score(&sentences[i], &email_context(&sentences, i)))
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), CommitmentError> {
        let config = serde_json::to_value(&self.config).map_err(|e| ArtifactError::Manifest(e.to_string()))?;
        save_model_dir(dir, KIND, &self.params, &[(VOCAB_FILE, self.vocab.to_text())], config)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CommitmentError> {
        let m = ModelDir::open(dir, KIND)?;
        let vocab = Vocabulary::from_text(&m.read_text(VOCAB_FILE)?)?;
        let mut model = Self::new(vocab, m.config()?)?;
        m.checkpoint.load_into(&mut model.params)?;
        Ok(model)
    }
}

/// Tokens of every sentence except `index`, in order.
pub fn email_context(sentences: &[Vec<String>], index: usize) -> Vec<String> {
    sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .flat_map(|(_, s)| s.iter().cloned())
        .collect()
}
