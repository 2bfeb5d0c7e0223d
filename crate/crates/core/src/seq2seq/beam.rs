use std::cmp::Ordering;

use todo_numeric::{LstmState, Tape};

use crate::text::{BOS_ID, EOS_ID};

use super::input::EncoderInput;
use super::model::{Dropout, Seq2SeqModel};
use super::Seq2SeqError;

pub const DEFAULT_BEAM_WIDTH: usize = 5;
pub const DEFAULT_MAX_DECODE_LEN: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Output ids in the extended vocabulary, `</s>` included when finished.
    pub ids: Vec<usize>,
    /// Surface tokens without `</s>`; copied ids resolve to source tokens.
    pub tokens: Vec<String>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability divided by the number of generated tokens.
    pub fn score(&self) -> f64 {
        if self.ids.is_empty() {
            0.0
        } else {
            self.log_prob / self.ids.len() as f64
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

struct Live {
    ids: Vec<usize>,
    log_prob: f64,
    state: LstmState,
}

fn score(log_prob: f64, len: usize) -> f64 {
    if len == 0 {
        0.0
    } else {
        log_prob / len as f64
    }
}

/// Higher score first, then the lexicographically smaller id sequence.
fn rank(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Length-normalized beam search. `on_expand` sees every distribution a
/// hypothesis is expanded from.
pub fn beam_search_with(
    model: &Seq2SeqModel,
    input: &EncoderInput,
    width: usize,
    max_len: usize,
    on_expand: &mut dyn FnMut(&[f64]),
) -> Result<Hypothesis, Seq2SeqError> {
    if width == 0 {
        return Err(Seq2SeqError::InvalidConfig("beam width must be positive".into()));
    }
    let mut tape = Tape::new();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let enc = model.encode_source(&mut tape, &model.params, input, Dropout::OFF, &mut rng)?;
    let mut live = vec![Live { ids: Vec::new(), log_prob: 0.0, state: enc.initial }];
    let mut done: Vec<(Vec<usize>, f64)> = Vec::new();

    for _ in 0..max_len {
        let mut cands: Vec<(Vec<usize>, f64, Option<LstmState>)> = Vec::new();
        for h in &live {
            let prev = h.ids.last().copied().unwrap_or(BOS_ID);
            let out = model.decode_step(&mut tape, &model.params, &enc, prev, h.state, Dropout::OFF, &mut rng)?;
            let probs = tape.value(out.probs).data();
            on_expand(probs);
            let mut order: Vec<usize> = (0..probs.len()).collect();
            order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
            for &id in order.iter().take(width) {
                let mut ids = h.ids.clone();
                ids.push(id);
                cands.push((ids, h.log_prob + probs[id].ln(), Some(out.state)));
            }
        }
        cands.extend(done.drain(..).map(|(ids, lp)| (ids, lp, None)));
        cands.sort_by(|a, b| rank((score(a.1, a.0.len()), &a.0), (score(b.1, b.0.len()), &b.0)));
        cands.truncate(width);
        live.clear();
        for (ids, log_prob, state) in cands {
            match state {
                Some(state) if ids.last() != Some(&EOS_ID) => live.push(Live { ids, log_prob, state }),
                _ => done.push((ids, log_prob)),
            }
        }
        if live.is_empty() {
            break;
        }
    }

    let mut all: Vec<(Vec<usize>, f64)> = done;
    all.extend(live.into_iter().map(|h| (h.ids, h.log_prob)));
    all.sort_by(|a, b| rank((score(a.1, a.0.len()), &a.0), (score(b.1, b.0.len()), &b.0)));
    let (ids, log_prob) = all.into_iter().next().unwrap_or((Vec::new(), 0.0));
    Ok(hypothesis(model, &enc.ext, ids, log_prob))
}

pub fn beam_search(model: &Seq2SeqModel, input: &EncoderInput, width: usize, max_len: usize) -> Result<Hypothesis, Seq2SeqError> {
    beam_search_with(model, input, width, max_len, &mut |_| {})
}

/// Argmax decoding (first maximum on ties) until `</s>` or `max_len`.
pub fn greedy_decode(model: &Seq2SeqModel, input: &EncoderInput, max_len: usize) -> Result<Hypothesis, Seq2SeqError> {
    let mut tape = Tape::new();
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let enc = model.encode_source(&mut tape, &model.params, input, Dropout::OFF, &mut rng)?;
    let mut state = enc.initial;
    let mut ids = Vec::new();
    let mut log_prob = 0.0;
    while ids.len() < max_len {
        let prev = ids.last().copied().unwrap_or(BOS_ID);
        let out = model.decode_step(&mut tape, &model.params, &enc, prev, state, Dropout::OFF, &mut rng)?;
        let probs = tape.value(out.probs).data();
        let best = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &p)| if p > b.1 { (i, p) } else { b });
        ids.push(best.0);
        log_prob += best.1.ln();
        state = out.state;
        if best.0 == EOS_ID {
            break;
        }
    }
    Ok(hypothesis(model, &enc.ext, ids, log_prob))
}

fn hypothesis(model: &Seq2SeqModel, ext: &super::input::ExtendedVocab, ids: Vec<usize>, log_prob: f64) -> Hypothesis {
    let finished = ids.last() == Some(&EOS_ID);
    let tokens = ids
        .iter()
        .filter(|&&id| id != EOS_ID)
        .map(|&id| ext.token(&model.target_vocab, id).unwrap_or(crate::text::UNK).to_string())
        .collect();
    Hypothesis { ids, tokens, log_prob, finished }
}
