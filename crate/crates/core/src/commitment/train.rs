use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use todo_numeric::{clip_grad_norm, AdagradState, Tape};

use super::{email_context, ClassifierConfig, CommitmentClassifier, CommitmentError, LabeledSentence};
use crate::corpus::{EmailMessage, TodoInstance};
use crate::text::{tokenize, Vocabulary};

/// Every candidate-email sentence, positive at the annotated index.
pub fn labeled_sentences(instances: &[TodoInstance]) -> Vec<LabeledSentence> {
    let mut out = Vec::new();
    for inst in instances {
        let sentences: Vec<Vec<String>> = inst.thread.candidate.sentences().iter().map(|s| tokenize(s)).collect();
        for (i, tokens) in sentences.iter().enumerate() {
            out.push(LabeledSentence {
                tokens: tokens.clone(),
                context: email_context(&sentences, i),
                label: i == inst.commitment_sentence_index,
            });
        }
    }
    out
}

/// Downsamples the majority class to the size of the minority class,
/// keeping the original order of the survivors.
pub fn balance(data: &[LabeledSentence], seed: u64) -> Vec<LabeledSentence> {
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data[i].label).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| !data[i].label).collect();
    let (mut major, minor) = if pos.len() > neg.len() { (pos, neg) } else { (neg, pos) };
    major.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    major.truncate(minor.len());
    let mut keep: Vec<usize> = major.into_iter().chain(minor).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| data[i].clone()).collect()
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierTrainLog {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation accuracy per epoch, when a validation set was given.
    pub validation_accuracy: Vec<f64>,
    pub best_epoch: usize,
    pub balanced_examples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub examples: usize,
}

pub fn evaluate_classifier(
    model: &CommitmentClassifier,
    data: &[LabeledSentence],
    threshold: f64,
) -> Result<ClassifierMetrics, CommitmentError> {
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for ex in data {
        let predicted = model.score(&ex.tokens, &ex.context)? >= threshold;
        match (predicted, ex.label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        correct += usize::from(predicted == ex.label);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(ClassifierMetrics {
        accuracy: ratio(correct, data.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        examples: data.len(),
    })
}

/// Balances the training data, builds the vocabulary from it and trains
/// with Adagrad and gradient clipping. With a validation set (balanced the
/// same way), training stops once validation accuracy has not improved for
/// `patience` epochs and the best epoch's parameters are returned.
pub fn train_classifier(
    train: &[LabeledSentence],
    validation: &[LabeledSentence],
    config: &ClassifierConfig,
) -> Result<(CommitmentClassifier, ClassifierTrainLog), CommitmentError> {
    config.validate()?;
    let positives = train.iter().filter(|e| e.label).count();
    let negatives = train.len() - positives;
    if positives < 2 || negatives < 2 {
        return Err(CommitmentError::SingleClass { positives, negatives });
    }
    let data = balance(train, config.seed);
    let validation = balance(validation, config.seed);
    let vocab = Vocabulary::build(data.iter().map(|e| [e.tokens.clone(), e.context.clone()].concat()), config.min_count);
    let mut model = CommitmentClassifier::new(vocab, config.clone())?;
    let mut optim = AdagradState::new(&model.params, config.learning_rate, config.accumulator_init);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log = ClassifierTrainLog {
        balanced_examples: data.len(),
        ..Default::default()
    };
    let mut best = (f64::NEG_INFINITY, model.params.clone());
    let mut stale = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                losses.push(model.loss(&mut tape, &model.params, &data[i])?);
            }
            let stacked = tape.concat(&losses, 0)?;
            let sum = tape.sum(stacked)?;
            let mean = tape.scale_const(sum, 1.0 / batch.len() as f64)?;
            total += tape.value(sum).item();
            tape.backward(mean, &mut model.params)?;
            clip_grad_norm(&mut model.params, config.max_grad_norm);
            optim.step(&mut model.params)?;
        }
        log.train_loss.push(total / data.len() as f64);
        if validation.is_empty() {
            log.best_epoch = epoch;
            continue;
        }
        let acc = evaluate_classifier(&model, &validation, 0.5)?.accuracy;
        log.validation_accuracy.push(acc);
        info!("classifier epoch {epoch}: loss {:.4} val acc {acc:.4}", total / data.len() as f64);
        if acc > best.0 {
            best = (acc, model.params.clone());
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if !validation.is_empty() {
        model.params = best.1;
    }
    Ok((model, log))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub email_index: usize,
    pub email_id: String,
    pub sentence_index: usize,
    pub sentence: String,
    pub score: f64,
}

/// Sentences scoring at least `threshold`, by descending score and then
/// document order.
pub fn extract_candidates(
    model: &CommitmentClassifier,
    emails: &[EmailMessage],
    threshold: f64,
) -> Result<Vec<Candidate>, CommitmentError> {
    let mut out = Vec::new();
    for (email_index, email) in emails.iter().enumerate() {
        let sentences = email.sentences();
        for (sentence_index, score) in model.score_email(email)?.into_iter().enumerate() {
            if score >= threshold {
                out.push(Candidate {
                    email_index,
                    email_id: email.id.clone(),
                    sentence_index,
                    sentence: sentences[sentence_index].clone(),
                    score,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.email_index.cmp(&b.email_index))
            .then(a.sentence_index.cmp(&b.sentence_index))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(label: bool, n: usize) -> LabeledSentence {
        LabeledSentence { tokens: vec![format!("t{n}")], context: vec![], label }
    }

    #[test]
    fn balancing() {
        let data: Vec<_> = (0..10).map(|i| ex(i < 3, i)).collect();
        let b = balance(&data, 1);
        assert_eq!(b.iter().filter(|e| e.label).count(), 3);
        assert_eq!(b.len(), 6);
        let balanced: Vec<_> = (0..6).map(|i| ex(i % 2 == 0, i)).collect();
        assert_eq!(balance(&balanced, 9), balanced);
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<_> = (0..5).map(|i| ex(true, i)).collect();
        assert!(matches!(
            train_classifier(&data, &[], &ClassifierConfig::default()),
            Err(CommitmentError::SingleClass { .. })
        ));
    }
}
