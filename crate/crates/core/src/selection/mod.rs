//! Unsupervised helpful-sentence selection: the enriched query context,
//! embedding providers, inner-product relevance and the
//! at-least-one-helpful@K evaluation.

mod providers;
mod wordvec;

use std::collections::HashMap;

use log::warn;
use thiserror::Error;

use crate::corpus::{SentenceSource, ThreadSentence, TodoInstance};
use crate::text::{content_lemmas, tokenize};

pub use providers::{EmbeddingProvider, FileVectorProvider, Pooling, TfBinary, WordVecPool};
pub use wordvec::{train_word_vectors, WordVectorConfig, WordVectorTable};

pub const DEFAULT_TAU: usize = 10;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("commitment sentence is empty")]
    EmptyQuery,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no vector for key {0:?}")]
    MissingKey(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("corpus has {tokens} tokens, not more than the window of {window}")]
    CorpusTooSmall { tokens: usize, window: usize },
    #[error("K must be at least 1")]
    InvalidK,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokens to embed, with an optional lookup key for file-backed providers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextUnit {
    pub key: Option<String>,
    pub tokens: Vec<String>,
}

impl TextUnit {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { key: None, tokens }
    }

    pub fn keyed(key: impl Into<String>, tokens: Vec<String>) -> Self {
        Self { key: Some(key.into()), tokens }
    }
}

/// The query `E = H ∥ subject ∥ top_tokens`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnrichedContext {
    pub query_sentence: Vec<String>,
    pub subject: Vec<String>,
    pub top_tokens: Vec<String>,
    pub tokens: Vec<String>,
}

/// The `tau` most frequent content lemmas. Ties go to the lemma that occurs
/// first, then lexicographically.
pub fn top_tokens<S: AsRef<[String]>>(sequences: &[S], tau: usize) -> Vec<String> {
    let mut stats: HashMap<String, (usize, usize)> = HashMap::new();
    let mut position = 0;
    for seq in sequences {
        for lemma in content_lemmas(seq.as_ref()) {
            stats.entry(lemma).or_insert((0, position)).0 += 1;
            position += 1;
        }
    }
    let mut ranked: Vec<(String, (usize, usize))> = stats.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(tau).map(|(l, _)| l).collect()
}

pub fn build_enriched_context(
    query: &[String],
    subject: &[String],
    top: &[String],
) -> Result<EnrichedContext, SelectionError> {
    if query.is_empty() {
        return Err(SelectionError::EmptyQuery);
    }
    Ok(EnrichedContext {
        query_sentence: query.to_vec(),
        subject: subject.to_vec(),
        top_tokens: top.to_vec(),
        tokens: [query, subject, top].concat(),
    })
}

/// Enriched context of an instance: top tokens are counted over every
/// thread sentence (which includes `H`) and the subject.
pub fn instance_context(instance: &TodoInstance, tau: usize) -> Result<EnrichedContext, SelectionError> {
    let query = tokenize(&instance.commitment_sentence());
    let subject = tokenize(&instance.thread.candidate.subject);
    let mut sequences: Vec<Vec<String>> = instance.thread_sentences().iter().map(|s| tokenize(&s.text)).collect();
    sequences.push(subject.clone());
    build_enriched_context(&query, &subject, &top_tokens(&sequences, tau))
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64, SelectionError> {
    if a.len() != b.len() {
        return Err(SelectionError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// `Ω(s) = h(s)ᵀ h(E)`.
pub fn relevance(sentence: &TextUnit, context: &TextUnit, provider: &dyn EmbeddingProvider) -> Result<f64, SelectionError> {
    let v = provider.embed_batch(&[sentence.clone(), context.clone()])?;
    dot(&v[0], &v[1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectedSentence {
    /// Position in the candidate list handed to [`select_top_k`].
    pub index: usize,
    pub text: String,
    pub score: f64,
}

/// The `k` highest-scoring candidates, by descending score and then input
/// order.
pub fn select_top_k(
    candidates: &[(TextUnit, String)],
    context: &TextUnit,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<SelectedSentence>, SelectionError> {
    if k == 0 {
        return Err(SelectionError::InvalidK);
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let mut units: Vec<TextUnit> = candidates.iter().map(|(u, _)| u.clone()).collect();
    units.push(context.clone());
    let vectors = provider.embed_batch(&units)?;
    let ctx = &vectors[candidates.len()];
    let mut scored: Vec<SelectedSentence> = candidates
        .iter()
        .zip(&vectors)
        .enumerate()
        .map(|(index, ((_, text), v))| Ok(SelectedSentence { index, text: text.clone(), score: dot(v, ctx)? }))
        .collect::<Result<_, SelectionError>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    scored.truncate(k);
    Ok(scored)
}

/// Thread sentences other than `H`, keyed `<id>:<index>`.
pub fn instance_candidates(instance: &TodoInstance) -> Vec<(ThreadSentence, TextUnit)> {
    instance
        .thread_sentences()
        .into_iter()
        .filter(|s| !(s.source == SentenceSource::Candidate && s.index == instance.commitment_sentence_index))
        .map(|s| {
            let unit = TextUnit::keyed(format!("{}:{}", instance.id, s.index), tokenize(&s.text));
            (s, unit)
        })
        .collect()
}

/// Selected sentences for an instance; `index` is the thread-sentence index.
pub fn select_for_instance(
    instance: &TodoInstance,
    provider: &dyn EmbeddingProvider,
    k: usize,
    tau: usize,
) -> Result<Vec<SelectedSentence>, SelectionError> {
    let context = instance_context(instance, tau)?;
    let ctx_unit = TextUnit::keyed(format!("{}:ctx", instance.id), context.tokens);
    let candidates = instance_candidates(instance);
    let pairs: Vec<(TextUnit, String)> = candidates.iter().map(|(s, u)| (u.clone(), s.text.clone())).collect();
    let mut picked = select_top_k(&pairs, &ctx_unit, provider, k)?;
    for p in &mut picked {
        p.index = candidates[p.index].0.index;
    }
    Ok(picked)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HelpfulAtK {
    pub value: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Fraction of labelled instances with at least one helpful sentence among
/// the top `k`. Instances without labels are skipped with a warning.
pub fn at_least_one_helpful(
    instances: &[TodoInstance],
    provider: &dyn EmbeddingProvider,
    k: usize,
    tau: usize,
) -> Result<HelpfulAtK, SelectionError> {
    let mut hits = 0usize;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for inst in instances {
        let Some(labels) = &inst.helpful_labels else {
            warn!("instance {} has no helpful labels; skipped", inst.id);
            skipped += 1;
            continue;
        };
        evaluated += 1;
        let picked = select_for_instance(inst, provider, k, tau)?;
        if picked.iter().any(|p| labels.get(p.index).copied().unwrap_or(false)) {
            hits += 1;
        }
    }
    let value = if evaluated == 0 { 0.0 } else { hits as f64 / evaluated as f64 };
    Ok(HelpfulAtK { value, evaluated, skipped })
}

/// Content-lemma streams of every thread sentence, for word-vector training.
pub fn lemma_sentences(instances: &[TodoInstance]) -> Vec<Vec<String>> {
    instances
        .iter()
        .flat_map(|i| i.thread_sentences())
        .map(|s| content_lemmas(&tokenize(&s.text)))
        .filter(|l| !l.is_empty())
        .collect()
}
