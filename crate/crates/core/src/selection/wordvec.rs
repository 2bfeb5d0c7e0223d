//! Word-vector tables: the text file format and skip-gram training with
//! negative sampling.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SelectionError;

/// One row per token, `dim` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl WordVectorTable {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self, SelectionError> {
        if dim == 0 {
            return Err(SelectionError::Format { line: 0, msg: "dimension must be positive".into() });
        }
        if data.len() != tokens.len() * dim {
            return Err(SelectionError::Format {
                line: 0,
                msg: format!("{} values for {} tokens of dimension {dim}", data.len(), tokens.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SelectionError::Format { line: 0, msg: "non-finite value".into() });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(SelectionError::Format { line: i + 2, msg: format!("duplicate token {t:?}") });
            }
        }
        Ok(Self { tokens, index, dim, data })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        Some(if nx == 0.0 || ny == 0.0 { 0.0 } else { dot / (nx * ny) })
    }

    /// `<count> <dim>` header, then `token v1 … vdim` per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.dim);
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            for v in self.row(i) {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, SelectionError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or(SelectionError::Format { line: 1, msg: "missing header".into() })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || SelectionError::Format { line: 1, msg: format!("bad header {header:?}") };
        if head.len() != 2 {
            return Err(bad_header());
        }
        let count: usize = head[0].parse().map_err(|_| bad_header())?;
        let dim: usize = head[1].parse().map_err(|_| bad_header())?;
        if dim == 0 {
            return Err(bad_header());
        }
        let mut tokens = Vec::new();
        let mut data = Vec::new();
        for (i, line) in lines {
            let (token, values) = parse_row(line, i + 1, dim)?;
            tokens.push(token);
            data.extend(values);
        }
        if tokens.len() != count {
            return Err(SelectionError::Format {
                line: 1,
                msg: format!("header announces {count} rows, found {}", tokens.len()),
            });
        }
        Self::new(tokens, dim, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SelectionError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SelectionError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Parses `key v1 … vdim`; `dim` of 0 accepts any positive width.
pub(crate) fn parse_row(line: &str, lineno: usize, dim: usize) -> Result<(String, Vec<f64>), SelectionError> {
    let mut parts = line.split_whitespace();
    let key = parts
        .next()
        .ok_or(SelectionError::Format { line: lineno, msg: "empty line".into() })?;
    let values: Vec<f64> = parts
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SelectionError::Format { line: lineno, msg: format!("bad value {p:?}") })
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() || (dim != 0 && values.len() != dim) {
        return Err(SelectionError::Format {
            line: lineno,
            msg: format!("expected {dim} values, found {}", values.len()),
        });
    }
    Ok((key.to_string(), values))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct WordVectorConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for WordVectorConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 5,
            epochs: 5,
            negatives: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling. Negatives are drawn from the unigram
/// distribution raised to 3/4; the learning rate decays linearly to 1e-4 of
/// its start. Rows are ordered by descending count, then lexicographically.
pub fn train_word_vectors(sentences: &[Vec<String>], config: &WordVectorConfig) -> Result<WordVectorTable, SelectionError> {
    if config.dim == 0 || config.window == 0 {
        return Err(SelectionError::InvalidConfig("dim and window must be positive".into()));
    }
    let total: usize = sentences.iter().map(Vec::len).sum();
    if total <= config.window {
        return Err(SelectionError::CorpusTooSmall { tokens: total, window: config.window });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for t in s {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= config.min_count).collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    let v = vocab.len();
    let d = config.dim;

    let mut cumulative = Vec::with_capacity(v);
    let mut acc = 0.0;
    for (_, c) in &vocab {
        acc += (*c as f64).powf(0.75);
        cumulative.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w_in: Vec<f64> = (0..v * d).map(|_| (rng.gen::<f64>() - 0.5) / d as f64).collect();
    let mut w_out = vec![0.0; v * d];

    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();
    let steps = (config.epochs * ids.iter().map(Vec::len).sum::<usize>()).max(1);
    let mut step = 0usize;
    let mut grad = vec![0.0; d];
    for _ in 0..config.epochs {
        for sent in &ids {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - step as f64 / steps as f64).max(1e-4);
                step += 1;
                let reach = rng.gen_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sent.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = sent[ctx_pos];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (center, 1.0)
                        } else {
                            let r = rng.gen::<f64>() * acc;
                            let t = cumulative.partition_point(|&c| c <= r).min(v - 1);
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let a = &w_in[context * d..(context + 1) * d];
                        let b = &mut w_out[target * d..(target + 1) * d];
                        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..d {
                            grad[j] += g * b[j];
                            b[j] += g * a[j];
                        }
                    }
                    for (w, g) in w_in[context * d..(context + 1) * d].iter_mut().zip(&grad) {
                        *w += g;
                    }
                }
            }
        }
    }
    WordVectorTable::new(vocab.into_iter().map(|(t, _)| t.to_string()).collect(), d, w_in)
}
