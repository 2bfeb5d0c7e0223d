//! BLEU-4, ROUGE-1/2/L, perplexity, token accuracy and Cohen's kappa.

mod kappa;
mod ngram;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokenize;

pub use kappa::cohen_kappa;
pub use ngram::{bleu4, lcs_len, rouge_l, rouge_l_multi, rouge_n, rouge_n_multi, sentence_bleu4};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("instance {0} has no references")]
    EmptyReferences(usize),
    #[error("rouge order must be 1 or 2, got {0}")]
    BadOrder(usize),
    #[error("no target tokens to score")]
    EmptyDataset,
    #[error("target id {target} outside a distribution of size {len}")]
    TargetOutOfRange { target: usize, len: usize },
    #[error("model: {0}")]
    Model(String),
}

/// Corpus scores, as in a results table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Corpus-level BLEU-4.
    pub bleu4: f64,
    /// Mean of per-instance BLEU-4.
    pub sentence_bleu4: f64,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    #[serde(rename = "rougeL_f1")]
    pub rouge_l_f1: f64,
    pub n_instances: usize,
}

/// Scores hypotheses against single references, tokenizing both with
/// [`tokenize`]. ROUGE values are per-instance means.
pub fn evaluate_texts(hypotheses: &[String], references: &[String]) -> Result<MetricReport, MetricsError> {
    if hypotheses.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    let hyp: Vec<Vec<String>> = hypotheses.iter().map(|h| tokenize(h)).collect();
    let refs: Vec<Vec<Vec<String>>> = references.iter().map(|r| vec![tokenize(r)]).collect();
    let n = hyp.len();
    let mean = |f: &dyn Fn(usize) -> f64| if n == 0 { 0.0 } else { (0..n).map(f).sum::<f64>() / n as f64 };
    Ok(MetricReport {
        bleu4: bleu4(&hyp, &refs)?,
        sentence_bleu4: mean(&|i| sentence_bleu4(&hyp[i], &refs[i]).unwrap_or(0.0)),
        rouge1_f1: mean(&|i| rouge_n(&hyp[i], &refs[i][0], 1).unwrap_or(0.0)),
        rouge2_f1: mean(&|i| rouge_n(&hyp[i], &refs[i][0], 2).unwrap_or(0.0)),
        rouge_l_f1: mean(&|i| rouge_l(&hyp[i], &refs[i][0])),
        n_instances: n,
    })
}

/// A model that can be run teacher-forced over an example, yielding one
/// probability distribution per target position together with the target
/// index into that distribution. Padding positions must not be returned.
pub trait TeacherForced {
    type Example;
    fn teacher_forced(&self, example: &Self::Example) -> Result<Vec<(Vec<f64>, usize)>, MetricsError>;
}

/// `exp` of the mean negative log-likelihood per target token, and the
/// fraction of positions whose argmax (first maximum) is the target.
pub fn perplexity_and_token_accuracy<M: TeacherForced>(
    model: &M,
    dataset: &[M::Example],
) -> Result<(f64, f64), MetricsError> {
    let mut nll = 0.0;
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in dataset {
        for (dist, target) in model.teacher_forced(ex)? {
            let p = *dist.get(target).ok_or(MetricsError::TargetOutOfRange {
                target,
                len: dist.len(),
            })?;
            nll -= p.ln();
            let argmax = dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            correct += usize::from(argmax == target);
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    Ok(((nll / total as f64).exp(), correct as f64 / total as f64))
}
