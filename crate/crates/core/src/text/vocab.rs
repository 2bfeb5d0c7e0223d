use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TextError;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const TO: &str = "<to>";
pub const SUB: &str = "<sub>";
pub const QUERY: &str = "<query>";
pub const SENT: &str = "<sent>";
pub const SRC_EOS: &str = "<eos>";

/// Reserved tokens, in id order.
pub const SPECIALS: [&str; 9] = [PAD, UNK, BOS, EOS, TO, SUB, QUERY, SENT, SRC_EOS];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;

/// Token ↔ id maps. Specials take the lowest ids; the remaining tokens are
/// ordered by descending count, then lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    min_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary with the standard [`SPECIALS`].
    pub fn build<I, S>(sequences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        Self::build_with_specials(sequences, min_count, &SPECIALS)
    }

    pub fn build_with_specials<I, S>(sequences: I, min_count: usize, specials: &[&str]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let owned: Vec<S> = sequences.into_iter().collect();
        for seq in &owned {
            for tok in seq.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !specials.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            min_count: Some(min_count),
        };
        for s in specials {
            vocab.push(s);
        }
        for (t, _) in kept {
            vocab.push(t);
        }
        vocab
    }

    fn push(&mut self, token: &str) {
        if !self.token_to_id.contains_key(token) {
            self.token_to_id.insert(token.to_string(), self.id_to_token.len());
            self.id_to_token.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn min_count(&self) -> Option<usize> {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, tokens: &[String]) -> TokenSequence {
        TokenSequence {
            tokens: tokens.to_vec(),
            ids: tokens.iter().map(|t| self.id_or_unk(t)).collect(),
        }
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>, TextError> {
        ids.iter()
            .map(|&id| {
                self.token(id)
                    .map(str::to_string)
                    .ok_or(TextError::IdOutOfRange { id, len: self.len() })
            })
            .collect()
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.id_to_token {
            let _ = writeln!(s, "{t}");
        }
        s
    }

    /// Parses the one-token-per-line form. The file must start with the
    /// standard specials in order and contain no duplicate or blank tokens.
    pub fn from_text(text: &str) -> Result<Self, TextError> {
        let mut vocab = Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
            min_count: None,
        };
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(TextError::VocabFormat {
                    line: lineno,
                    msg: format!("invalid token {line:?}"),
                });
            }
            if i < SPECIALS.len() && line != SPECIALS[i] {
                return Err(TextError::VocabFormat {
                    line: lineno,
                    msg: format!("expected special {:?}, found {line:?}", SPECIALS[i]),
                });
            }
            if vocab.contains(line) {
                return Err(TextError::VocabFormat {
                    line: lineno,
                    msg: format!("duplicate token {line:?}"),
                });
            }
            vocab.push(line);
        }
        if vocab.len() < SPECIALS.len() {
            return Err(TextError::VocabFormat {
                line: vocab.len() + 1,
                msg: "missing special tokens".into(),
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TextError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
