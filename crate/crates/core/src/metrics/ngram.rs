use std::collections::HashMap;

use super::MetricsError;

type Tokens = [String];

fn ngram_counts(tokens: &Tokens, n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Clipped matches and candidate n-gram total for one order.
fn clipped(candidate: &Tokens, references: &[Vec<String>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_default();
            *e = (*e).max(c);
        }
    }
    let matches = cand
        .iter()
        .map(|(g, c)| (*c).min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; ties go to the shorter one.
fn closest_ref_len(c: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

/// Corpus-level BLEU-4.
///
/// Clipped n-gram counts and lengths are summed over the corpus before the
/// precisions are formed. An order n ≥ 2 with zero matches uses the
/// smoothed precision `1 / (total + 1)`; a zero unigram precision gives 0.
/// The brevity penalty is `exp(1 − r/c)` when `c < r`, with `r` the sum of
/// closest reference lengths.
pub fn bleu4(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let mut c_len = 0usize;
    let mut r_len = 0usize;
    for (i, (cand, refs)) in candidates.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(MetricsError::EmptyReferences(i));
        }
        for n in 1..=4 {
            let (m, t) = clipped(cand, refs, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
        c_len += cand.len();
        r_len += closest_ref_len(cand.len(), refs);
    }
    if c_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..4 {
        let p = if matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    Ok((bp * (log_sum / 4.0).exp()).min(1.0))
}

/// BLEU-4 of a single candidate.
pub fn sentence_bleu4(candidate: &[String], references: &[Vec<String>]) -> Result<f64, MetricsError> {
    bleu4(&[candidate.to_vec()], &[references.to_vec()])
}

fn f1(overlap: usize, cand_total: usize, ref_total: usize) -> f64 {
    if overlap == 0 || cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_total as f64;
    let r = overlap as f64 / ref_total as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 for n ∈ {1, 2}.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Result<f64, MetricsError> {
    if !(1..=2).contains(&n) {
        return Err(MetricsError::BadOrder(n));
    }
    let (overlap, cand_total) = clipped(candidate, &[reference.to_vec()], n);
    Ok(f1(overlap, cand_total, reference.len().saturating_sub(n - 1)))
}

pub fn rouge_n_multi(candidate: &[String], references: &[Vec<String>], n: usize) -> Result<f64, MetricsError> {
    references
        .iter()
        .map(|r| rouge_n(candidate, r, n))
        .try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge_l_multi(candidate: &[String], references: &[Vec<String>]) -> f64 {
    references.iter().map(|r| rouge_l(candidate, r)).fold(0.0, f64::max)
}
