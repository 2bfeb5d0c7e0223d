use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use todo_numeric::{clip_grad_norm, AdagradState, NumericError, Tape};

use crate::corpus::TodoInstance;
use crate::metrics::{perplexity_and_token_accuracy, MetricsError, TeacherForced};
use crate::selection::WordVectorTable;
use crate::text::{tokenize, Vocabulary};

use super::input::{serialize_input, EncoderInput};
use super::model::{Dropout, Seq2SeqModel};
use super::{ModelConfig, Seq2SeqError};

/// A source/target pair ready for the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub input: EncoderInput,
    pub target: Vec<String>,
}

impl Example {
    pub fn from_instance(instance: &TodoInstance, selected: &[String], max_source_len: usize) -> Result<Self, Seq2SeqError> {
        Ok(Self {
            id: instance.id.clone(),
            input: serialize_input(instance, selected, max_source_len)?,
            target: tokenize(instance.reference()),
        })
    }
}

/// Separate source and target vocabularies over the training examples.
pub fn build_vocabularies(examples: &[Example], min_count: usize) -> (Vocabulary, Vocabulary) {
    let source = Vocabulary::build(examples.iter().map(|e| &e.input.tokens), min_count);
    let target = Vocabulary::build(examples.iter().map(|e| &e.target), min_count);
    (source, target)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub accumulator_init: f64,
    pub max_grad_norm: f64,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub beam_width: usize,
    pub max_decode_len: usize,
    /// Word-vector file for the embedding tables; seeded random init otherwise.
    pub embedding_file: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 0.15,
            accumulator_init: 0.1,
            max_grad_norm: 2.0,
            dropout: 0.5,
            attention_dropout: 0.5,
            patience: 5,
            max_epochs: 30,
            beam_width: 5,
            max_decode_len: 30,
            embedding_file: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Seq2SeqError> {
        if [self.batch_size, self.patience, self.max_epochs, self.beam_width, self.max_decode_len].contains(&0) {
            return Err(Seq2SeqError::InvalidConfig("batch, patience, epochs, beam width and decode length must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.accumulator_init > 0.0 && self.max_grad_norm > 0.0) {
            return Err(Seq2SeqError::InvalidConfig("learning rate, accumulator and clip norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.attention_dropout) {
            return Err(Seq2SeqError::InvalidConfig("dropout rates must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn dropout(&self) -> Dropout {
        Dropout { rate: self.dropout, attention: self.attention_dropout }
    }
}

/// Patience counter: reset when accuracy and perplexity both improve,
/// decremented when either does not. The best epoch has the highest
/// accuracy, ties going to lower perplexity.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub remaining: usize,
    best_accuracy: f64,
    best_perplexity: f64,
    best: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            remaining: patience,
            best_accuracy: f64::NEG_INFINITY,
            best_perplexity: f64::INFINITY,
            best: None,
        }
    }

    pub fn observe(&mut self, accuracy: f64, perplexity: f64) -> Observation {
        let acc_up = accuracy > self.best_accuracy;
        let ppl_down = perplexity < self.best_perplexity;
        self.best_accuracy = self.best_accuracy.max(accuracy);
        self.best_perplexity = self.best_perplexity.min(perplexity);
        if acc_up && ppl_down {
            self.remaining = self.patience;
        } else {
            self.remaining = self.remaining.saturating_sub(1);
        }
        let new_best = match self.best {
            None => true,
            Some((a, p)) => accuracy > a || (accuracy == a && perplexity < p),
        };
        if new_best {
            self.best = Some((accuracy, perplexity));
        }
        Observation { new_best, stop: self.remaining == 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training NLL per target token.
    pub train_loss: f64,
    pub validation_accuracy: f64,
    pub validation_perplexity: f64,
    pub patience_left: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub embedding_init: String,
}

/// Drives `epoch` (returning the training loss) and `validate` (returning
/// accuracy and perplexity) under [`EarlyStopping`]; `on_best` runs after
/// every epoch that becomes the best so far.
pub fn run_early_stopping<E>(
    max_epochs: usize,
    patience: usize,
    mut epoch: impl FnMut(usize) -> Result<f64, E>,
    mut validate: impl FnMut(usize) -> Result<(f64, f64), E>,
    mut on_best: impl FnMut(usize),
) -> Result<TrainLog, E> {
    let mut stopper = EarlyStopping::new(patience);
    let mut log = TrainLog::default();
    for e in 1..=max_epochs {
        let train_loss = epoch(e)?;
        let (acc, ppl) = validate(e)?;
        let obs = stopper.observe(acc, ppl);
        log.epochs.push(EpochRecord {
            epoch: e,
            train_loss,
            validation_accuracy: acc,
            validation_perplexity: ppl,
            patience_left: stopper.remaining,
        });
        if obs.new_best {
            log.best_epoch = e;
            on_best(e);
        }
        if obs.stop {
            log.stopped_early = true;
            break;
        }
    }
    Ok(log)
}

impl TeacherForced for Seq2SeqModel {
    type Example = Example;

    fn teacher_forced(&self, example: &Example) -> Result<Vec<(Vec<f64>, usize)>, MetricsError> {
        self.teacher_forced_distributions(&example.input, &example.target)
            .map_err(|e| MetricsError::Model(e.to_string()))
    }
}

/// Validation (perplexity, token accuracy) in eval mode.
pub fn evaluate_teacher_forced(model: &Seq2SeqModel, data: &[Example]) -> Result<(f64, f64), Seq2SeqError> {
    perplexity_and_token_accuracy(model, data).map_err(|e| Seq2SeqError::Evaluation(e.to_string()))
}

/// Copies word vectors into both embedding tables; returns how many rows
/// were initialized.
pub fn init_embeddings(model: &mut Seq2SeqModel, table: &WordVectorTable) -> Result<usize, Seq2SeqError> {
    if table.dim() != model.config.embed_dim {
        return Err(Seq2SeqError::InvalidConfig(format!(
            "word vectors have dimension {}, the model embeds {}",
            table.dim(),
            model.config.embed_dim
        )));
    }
    let mut hits = 0;
    for (id, vocab) in [
        (model.source_embedding(), model.source_vocab.clone()),
        (model.target_embedding(), model.target_vocab.clone()),
    ] {
        let dim = table.dim();
        let data = model.params.value_mut(id).data_mut();
        for (row, tok) in vocab.tokens().iter().enumerate() {
            if let Some(v) = table.get(tok) {
                data[row * dim..(row + 1) * dim].copy_from_slice(v);
                hits += 1;
            }
        }
    }
    Ok(hits)
}

/// Builds vocabularies and a fresh model from the training examples.
pub fn build_model(config: ModelConfig, train: &[Example]) -> Result<Seq2SeqModel, Seq2SeqError> {
    if train.is_empty() {
        return Err(Seq2SeqError::EmptySplit("train"));
    }
    let (source, target) = build_vocabularies(train, config.min_count);
    Seq2SeqModel::new(config, source, target)
}

/// Summed loss and token count of one minibatch. The gradient of the loss
/// summed over tokens and averaged over sentences is accumulated into the
/// model parameters.
fn batch_step(
    model: &mut Seq2SeqModel,
    batch: &[&Example],
    dropout: Dropout,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize), Seq2SeqError> {
    let mut tape = Tape::new();
    let mut losses = Vec::with_capacity(batch.len());
    let mut tokens = 0;
    for ex in batch {
        let (l, n) = model.loss(&mut tape, &model.params, &ex.input, &ex.target, dropout, rng)?;
        losses.push(l);
        tokens += n;
    }
    let all = tape.concat(&losses, 1)?;
    let total = tape.sum(all)?;
    let per_sentence = tape.scale_const(total, 1.0 / batch.len() as f64)?;
    let value = tape.value(total).item();
    tape.backward(per_sentence, &mut model.params)?;
    Ok((value, tokens))
}

/// Teacher-forced training with Adagrad, global-norm clipping and early
/// stopping on validation accuracy and perplexity. The model ends holding
/// the best epoch's parameters.
pub fn train(
    model: &mut Seq2SeqModel,
    train: &[Example],
    validation: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainLog, Seq2SeqError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Seq2SeqError::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(Seq2SeqError::EmptySplit("validation"));
    }
    let embedding_init = match &cfg.embedding_file {
        Some(path) => {
            let table = WordVectorTable::load(path).map_err(|e| Seq2SeqError::InvalidConfig(e.to_string()))?;
            let hits = init_embeddings(model, &table)?;
            format!("file:{} ({hits} rows)", path.display())
        }
        None => {
            log::warn!("no embedding file configured; using seeded random embeddings");
            "random".to_string()
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdagradState::new(&model.params, cfg.learning_rate, cfg.accumulator_init);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.params.clone();
    let dropout = cfg.dropout();
    let cell = std::cell::RefCell::new(&mut *model);

    let mut log = run_early_stopping::<Seq2SeqError>(
        cfg.max_epochs,
        cfg.patience,
        |epoch| {
            let mut m = cell.borrow_mut();
            order.shuffle(&mut rng);
            let (mut total, mut tokens) = (0.0, 0);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
                let (loss, n) = batch_step(&mut m, &batch, dropout, &mut rng).map_err(|e| match e {
                    Seq2SeqError::Numeric(NumericError::NonFinite { op }) => Seq2SeqError::Diverged { epoch, op },
                    other => other,
                })?;
                clip_grad_norm(&mut m.params, cfg.max_grad_norm);
                opt.step(&mut m.params)?;
                total += loss;
                tokens += n;
            }
            let mean = total / tokens as f64;
            log::info!("epoch {epoch}: train loss {mean:.4}");
            Ok(mean)
        },
        |epoch| {
            let (ppl, acc) = evaluate_teacher_forced(&cell.borrow(), validation)?;
            log::info!("epoch {epoch}: validation accuracy {acc:.4}, perplexity {ppl:.4}");
            Ok((acc, ppl))
        },
        |_| best = cell.borrow().params.clone(),
    )?;
    model.params = best;
    log.embedding_init = embedding_init;
    Ok(log)
}
