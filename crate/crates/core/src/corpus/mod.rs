//! Email threads, To-Do annotations, dataset splits and the synthetic
//! corpus generator.

mod record;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::text::{split_sentences, tokenize};

pub use record::{load_corpus, parse_corpus, parse_record, to_record_line, write_corpus, Diagnostic, LoadReport};
pub use synth::{
    generate_entity_pool, synth_corpus, SynthSpec, DISTRACTOR_SENTENCES, TASK_MODIFIERS, TASK_OBJECTS,
    TASK_VERBS, WEEKDAYS,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: field `{field}`: {msg}")]
    Schema { line: usize, field: String, msg: String },
    #[error("ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("need at least 3 instances to split, got {0}")]
    TooFewInstances(usize),
    #[error("no annotations to choose from")]
    NoAnnotations,
    #[error("entity pool is empty")]
    EmptyEntityPool,
    #[error("synthetic corpus: {0}")]
    Synth(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmailMessage {
    pub id: String,
    pub from: String,
    pub to: Vec<String>,
    pub subject: String,
    pub body: String,
    pub sent_time: i64,
    pub reply_to_id: Option<String>,
}

impl EmailMessage {
    pub fn sentences(&self) -> Vec<String> {
        split_sentences(&self.body)
    }

    /// Lowercased tokens of the first recipient's display name.
    pub fn recipient_tokens(&self) -> Vec<String> {
        self.to.first().map(|r| tokenize(r)).unwrap_or_default()
    }
}

/// The candidate email `e_c` and, when present, the message it replies to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmailThread {
    pub candidate: EmailMessage,
    pub previous: Option<EmailMessage>,
}

/// Which message of the thread a sentence came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SentenceSource {
    Candidate,
    Previous,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadSentence {
    pub source: SentenceSource,
    /// Position in the concatenated `e_c ∥ e_p` sentence list.
    pub index: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TodoInstance {
    pub id: String,
    pub thread: EmailThread,
    pub commitment_sentence_index: usize,
    pub annotations: Vec<String>,
    pub helpful_labels: Option<Vec<bool>>,
}

impl TodoInstance {
    /// Sentences of `e_c` followed by those of `e_p`; this is the index
    /// space of `helpful_labels`.
    pub fn thread_sentences(&self) -> Vec<ThreadSentence> {
        self
            .thread
            .candidate
            .sentences()
            .into_iter()
            .map(|text| (SentenceSource::Candidate, text))
            .chain(
                self.thread
                    .previous
                    .iter()
                    .flat_map(|p| p.sentences())
                    .map(|text| (SentenceSource::Previous, text)),
            )
            .enumerate()
            .map(|(index, (source, text))| ThreadSentence { source, index, text })
            .collect()
    }

    pub fn commitment_sentence(&self) -> String {
        self.thread.candidate.sentences()[self.commitment_sentence_index].clone()
    }

    /// The annotation used as ground truth.
    pub fn reference(&self) -> &str {
        choose_reference(&self.annotations).unwrap_or("")
    }
}

/// The annotation with the fewest tokens; ties go to the earliest.
pub fn choose_reference(annotations: &[String]) -> Result<&str, CorpusError> {
    annotations
        .iter()
        .enumerate()
        .min_by_key(|(i, a)| (tokenize(a).len(), *i))
        .map(|(_, a)| a.as_str())
        .ok_or(CorpusError::NoAnnotations)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<TodoInstance>,
    pub validation: Vec<TodoInstance>,
    pub test: Vec<TodoInstance>,
}

/// Train/validation/test proportions of the 7349/1000/1000 split.
pub const DEFAULT_RATIOS: [f64; 3] = [7349.0 / 9349.0, 1000.0 / 9349.0, 1000.0 / 9349.0];

/// Seeded Fisher–Yates shuffle, then floor allocation of the validation and
/// test shares; the remainder goes to train.
pub fn split_dataset(
    instances: &[TodoInstance],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let n = instances.len();
    if n < 3 {
        return Err(CorpusError::TooFewInstances(n));
    }
    let share = |r: f64| ((n as f64) * r + 1e-6).floor() as usize;
    let n_val = share(ratios[1]);
    let n_test = share(ratios[2]).min(n - n_val);
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: std::ops::Range<usize>| -> Vec<TodoInstance> {
        order[range].iter().map(|&i| instances[i].clone()).collect()
    };
    Ok(DatasetSplit {
        train: pick(0..n_train),
        validation: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(n: usize) -> Vec<TodoInstance> {
        (0..n)
            .map(|i| TodoInstance {
                id: format!("i{i}"),
                thread: EmailThread {
                    candidate: EmailMessage {
                        id: format!("i{i}"),
                        from: "A".into(),
                        to: vec!["B".into()],
                        subject: String::new(),
                        body: "I will do it.".into(),
                        sent_time: i as i64,
                        reply_to_id: None,
                    },
                    previous: None,
                },
                commitment_sentence_index: 0,
                annotations: vec!["do it".into()],
                helpful_labels: None,
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let data = dummy(10);
        let s = split_dataset(&data, [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split_dataset(&data, [0.8, 0.1, 0.1], 3).unwrap());
        assert_ne!(s.train, split_dataset(&data, [0.8, 0.1, 0.1], 4).unwrap().train);

        let big = dummy(9349);
        let s = split_dataset(&big, DEFAULT_RATIOS, 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (7349, 1000, 1000));
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_dataset(&dummy(10), [0.5, 0.1, 0.1], 0),
            Err(CorpusError::BadRatios(_))
        ));
        assert!(matches!(
            split_dataset(&dummy(2), [0.8, 0.1, 0.1], 0),
            Err(CorpusError::TooFewInstances(2))
        ));
    }

    #[test]
    fn reference_choice() {
        let a = vec!["send report to Bob".to_string(), "send the quarterly report to Bob".to_string()];
        assert_eq!(choose_reference(&a).unwrap(), "send report to Bob");
        let single = vec!["x y".to_string()];
        assert_eq!(choose_reference(&single).unwrap(), "x y");
        let tie = vec!["a b c".to_string(), "d e f".to_string()];
        assert_eq!(choose_reference(&tie).unwrap(), "a b c");
        assert!(matches!(choose_reference(&[]), Err(CorpusError::NoAnnotations)));
    }
}
