use std::collections::HashMap;

use crate::corpus::TodoInstance;
use crate::text::{tokenize, Vocabulary, QUERY, SENT, SRC_EOS, SUB, TO, UNK_ID};

use super::Seq2SeqError;

/// Default cap on encoder input length.
pub const MAX_SOURCE_LEN: usize = 400;

/// `<to> recipient <sub> subject <query> H <sent> I <eos>`, lowercased.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub tokens: Vec<String>,
    /// Span of the commitment tokens (after `<query>`).
    pub query: std::ops::Range<usize>,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Commitment tokens, for the query encoder.
    pub fn query_tokens(&self) -> &[String] {
        &self.tokens[self.query.clone()]
    }

    /// Every token outside the query span, for the second encoder.
    pub fn rest_tokens(&self) -> Vec<String> {
        self.tokens[..self.query.start]
            .iter()
            .chain(&self.tokens[self.query.end..])
            .cloned()
            .collect()
    }
}

/// Lays out the encoder input from the fields of `instance` and the
/// selected sentences, in the order given. Inputs longer than `max_len` lose
/// trailing sentence tokens first, then subject, recipient and query tokens.
pub fn serialize_input(instance: &TodoInstance, selected: &[String], max_len: usize) -> Result<EncoderInput, Seq2SeqError> {
    let candidate = &instance.thread.candidate;
    let sentences = candidate.sentences();
    let h = sentences
        .get(instance.commitment_sentence_index)
        .ok_or(Seq2SeqError::MissingCommitment)?;
    let recipient = candidate.recipient_tokens();
    let subject = tokenize(&candidate.subject);
    let query = tokenize(h);
    let sent: Vec<String> = selected.iter().flat_map(|s| tokenize(s)).collect();
    Ok(layout(recipient, subject, query, sent, max_len))
}

fn layout(
    mut recipient: Vec<String>,
    mut subject: Vec<String>,
    mut query: Vec<String>,
    mut sent: Vec<String>,
    max_len: usize,
) -> EncoderInput {
    let markers = 5;
    let budget = max_len.max(markers + 1) - markers;
    let mut excess = (recipient.len() + subject.len() + query.len() + sent.len()).saturating_sub(budget);
    for part in [&mut sent, &mut subject, &mut recipient] {
        let cut = excess.min(part.len());
        part.truncate(part.len() - cut);
        excess -= cut;
    }
    let keep = query.len().saturating_sub(excess).max(1.min(query.len()));
    query.truncate(keep);

    let mut tokens = vec![TO.to_string()];
    tokens.extend(recipient);
    tokens.push(SUB.to_string());
    tokens.extend(subject);
    tokens.push(QUERY.to_string());
    let start = tokens.len();
    tokens.extend(query);
    let end = tokens.len();
    tokens.push(SENT.to_string());
    tokens.extend(sent);
    tokens.push(SRC_EOS.to_string());
    EncoderInput { tokens, query: start..end }
}

/// `recipient ++ subject ++ H`, the rule-based baseline.
pub fn concatenate_baseline(instance: &TodoInstance) -> Result<String, Seq2SeqError> {
    let candidate = &instance.thread.candidate;
    let h = candidate
        .sentences()
        .get(instance.commitment_sentence_index)
        .cloned()
        .ok_or(Seq2SeqError::MissingCommitment)?;
    let mut tokens = candidate.recipient_tokens();
    tokens.extend(tokenize(&candidate.subject));
    tokens.extend(tokenize(&h));
    Ok(tokens.join(" "))
}

/// The extended vocabulary `V′` of one source: target-vocabulary ids for
/// source tokens the target vocabulary knows, and ids `|V| + k` for the
/// others in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedVocab {
    pub base: usize,
    pub oov: Vec<String>,
    index: HashMap<String, usize>,
}

impl ExtendedVocab {
    pub fn new(target: &Vocabulary, sources: &[&[String]]) -> Self {
        let mut oov = Vec::new();
        let mut index = HashMap::new();
        for tok in sources.iter().flat_map(|s| s.iter()) {
            if !target.contains(tok) && !index.contains_key(tok) {
                index.insert(tok.clone(), target.len() + oov.len());
                oov.push(tok.clone());
            }
        }
        Self { base: target.len(), oov, index }
    }

    pub fn len(&self) -> usize {
        self.base + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, target: &Vocabulary, token: &str) -> usize {
        target
            .id(token)
            .or_else(|| self.index.get(token).copied())
            .unwrap_or(UNK_ID)
    }

    pub fn ids(&self, target: &Vocabulary, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(target, t)).collect()
    }

    pub fn token<'a>(&'a self, target: &'a Vocabulary, id: usize) -> Option<&'a str> {
        if id < self.base {
            target.token(id)
        } else {
            self.oov.get(id - self.base).map(String::as_str)
        }
    }
}
