use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::wordvec::{parse_row, WordVectorTable};
use super::{SelectionError, TextUnit};
use crate::text::content_lemmas;

/// Sentence embedding `h(·)`. A batch is embedded together so that
/// providers with a per-instance feature space (such as [`TfBinary`]) can
/// build it from every unit being compared; all vectors of one batch share a
/// dimension.
pub trait EmbeddingProvider {
    fn name(&self) -> &str;
    /// Fixed output width, or `None` when it depends on the batch.
    fn dimension(&self) -> Option<usize>;
    fn embed_batch(&self, units: &[TextUnit]) -> Result<Vec<Vec<f64>>, SelectionError>;
}

/// Binary term-frequency vectors over the content-lemma types of the batch.
#[derive(Clone, Copy, Debug, Default)]
pub struct TfBinary;

impl EmbeddingProvider for TfBinary {
    fn name(&self) -> &str {
        "tf"
    }

    fn dimension(&self) -> Option<usize> {
        None
    }

    fn embed_batch(&self, units: &[TextUnit]) -> Result<Vec<Vec<f64>>, SelectionError> {
        let lemmas: Vec<BTreeSet<String>> = units.iter().map(|u| content_lemmas(&u.tokens).into_iter().collect()).collect();
        let inventory: BTreeSet<&String> = lemmas.iter().flatten().collect();
        let position: HashMap<&String, usize> = inventory.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        Ok(lemmas
            .iter()
            .map(|set| {
                let mut v = vec![0.0; position.len()];
                for t in set {
                    v[position[t]] = 1.0;
                }
                v
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    Max,
}

/// Mean- or max-pooled word vectors over a unit's content lemmas. Each word
/// vector is scaled to unit length before pooling, as FastText does for
/// sentence vectors. Lemmas missing from the table are skipped; a unit with
/// none left embeds to zero.
#[derive(Clone, Debug)]
pub struct WordVecPool {
    table: WordVectorTable,
    pooling: Pooling,
}

impl WordVecPool {
    pub fn new(table: WordVectorTable, pooling: Pooling) -> Self {
        Self { table, pooling }
    }

    pub fn table(&self) -> &WordVectorTable {
        &self.table
    }

    fn embed(&self, unit: &TextUnit) -> Vec<f64> {
        let d = self.table.dim();
        let rows: Vec<Vec<f64>> = content_lemmas(&unit.tokens)
            .iter()
            .filter_map(|l| self.table.get(l))
            .map(|r| {
                let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
            })
            .collect();
        if rows.is_empty() {
            return vec![0.0; d];
        }
        match self.pooling {
            Pooling::Mean => {
                let mut v = vec![0.0; d];
                for r in &rows {
                    v.iter_mut().zip(r.iter()).for_each(|(a, b)| *a += b);
                }
                v.iter_mut().for_each(|a| *a /= rows.len() as f64);
                v
            }
            Pooling::Max => (0..d).map(|j| rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect(),
        }
    }
}

impl EmbeddingProvider for WordVecPool {
    fn name(&self) -> &str {
        match self.pooling {
            Pooling::Mean => "wv-mean",
            Pooling::Max => "wv-max",
        }
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.table.dim())
    }

    fn embed_batch(&self, units: &[TextUnit]) -> Result<Vec<Vec<f64>>, SelectionError> {
        Ok(units.iter().map(|u| self.embed(u)).collect())
    }
}

/// Precomputed vectors looked up by unit key (`<instance-id>:<sentence
/// index>`, and `<instance-id>:ctx` for the enriched context).
#[derive(Clone, Debug)]
pub struct FileVectorProvider {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl FileVectorProvider {
    pub fn parse(text: &str) -> Result<Self, SelectionError> {
        let mut vectors = HashMap::new();
        let mut dim = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, values) = parse_row(line, i + 1, dim)?;
            dim = values.len();
            if vectors.insert(key.clone(), values).is_some() {
                return Err(SelectionError::Format { line: i + 1, msg: format!("duplicate key {key:?}") });
            }
        }
        if vectors.is_empty() {
            return Err(SelectionError::Format { line: 1, msg: "no vectors".into() });
        }
        Ok(Self { vectors, dim })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SelectionError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileVectorProvider {
    fn name(&self) -> &str {
        "file"
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_batch(&self, units: &[TextUnit]) -> Result<Vec<Vec<f64>>, SelectionError> {
        units
            .iter()
            .map(|u| {
                let key = u.key.as_deref().ok_or_else(|| SelectionError::MissingKey("<unkeyed>".into()))?;
                self.vectors.get(key).cloned().ok_or_else(|| SelectionError::MissingKey(key.to_string()))
            })
            .collect()
    }
}
