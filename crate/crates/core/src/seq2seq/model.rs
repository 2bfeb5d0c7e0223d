use rand::RngCore;
use todo_numeric::{Initializer, Linear, LstmCell, LstmState, ParamId, ParamSet, Tape, Tensor, Var};

use crate::text::{Vocabulary, BOS_ID, EOS_ID, UNK_ID};

use super::input::{EncoderInput, ExtendedVocab};
use super::{ModelConfig, Seq2SeqError, Variant};

/// `e = vᵀ tanh(W_h h + W_s s + b)` over the encoder states.
#[derive(Clone, Debug)]
pub struct Attention {
    pub w_h: ParamId,
    pub w_s: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

impl Attention {
    fn new(params: &mut ParamSet, name: &str, hidden: usize, dim: usize, range: f64, init: &mut Initializer) -> Result<Self, Seq2SeqError> {
        Ok(Self {
            w_h: params.add_uniform(format!("{name}.w_h"), &[hidden, dim], range, init)?,
            w_s: params.add_uniform(format!("{name}.w_s"), &[hidden, dim], range, init)?,
            b: params.add_zeros(format!("{name}.b"), &[1, dim])?,
            v: params.add_uniform(format!("{name}.v"), &[dim, 1], range, init)?,
        })
    }

    /// `H · W_h`, computed once per source.
    pub fn project(&self, tape: &mut Tape, params: &ParamSet, states: Var) -> Result<Var, Seq2SeqError> {
        let w = tape.param(params, self.w_h);
        Ok(tape.matmul(states, w)?)
    }
}

/// Attention weights `[1, T]` and context `[1, H]` for decoder state `s`.
/// `projected` is [`Attention::project`] of `states`.
pub fn attention_step(
    tape: &mut Tape,
    params: &ParamSet,
    att: &Attention,
    states: Var,
    projected: Var,
    s: Var,
) -> Result<(Var, Var), Seq2SeqError> {
    let w_s = tape.param(params, att.w_s);
    let b = tape.param(params, att.b);
    let v = tape.param(params, att.v);
    let q = tape.matmul(s, w_s)?;
    let q = tape.add(q, b)?;
    let e = tape.add_row(projected, q)?;
    let e = tape.tanh(e)?;
    let e = tape.matmul(e, v)?;
    let e = tape.transpose(e)?;
    let a = tape.softmax(e)?;
    let ctx = tape.matmul(a, states)?;
    Ok((a, ctx))
}

/// `p_gen · P_vocab ⊕ (1 − p_gen) · Σ_{i: x_i = w} a_i` over a `[1, width]` row.
pub fn copy_mixture(
    tape: &mut Tape,
    p_vocab: Var,
    p_gen: Var,
    attention: Var,
    ext_ids: &[usize],
    width: usize,
) -> Result<Var, Seq2SeqError> {
    let copy = tape.scatter_add(attention, ext_ids, width)?;
    mix(tape, p_vocab, p_gen, copy, width)
}

/// Copy mixture over two sources: the copy mass is `λ · query + (1 − λ) · rest`.
/// Without a rest source it reduces to [`copy_mixture`] over the query.
#[allow(clippy::too_many_arguments)]
pub fn bifocal_mixture(
    tape: &mut Tape,
    p_vocab: Var,
    p_gen: Var,
    lambda: Var,
    query: (Var, &[usize]),
    rest: Option<(Var, &[usize])>,
    width: usize,
) -> Result<Var, Seq2SeqError> {
    let q = tape.scatter_add(query.0, query.1, width)?;
    let copy = match rest {
        Some((a, ids)) => {
            let r = tape.scatter_add(a, ids, width)?;
            let q = tape.scale(q, lambda)?;
            let not = tape.one_minus(lambda)?;
            let r = tape.scale(r, not)?;
            tape.add(q, r)?
        }
        None => q,
    };
    mix(tape, p_vocab, p_gen, copy, width)
}

fn mix(tape: &mut Tape, p_vocab: Var, p_gen: Var, copy: Var, width: usize) -> Result<Var, Seq2SeqError> {
    let gen = tape.pad_cols(p_vocab, width)?;
    let gen = tape.scale(gen, p_gen)?;
    let not = tape.one_minus(p_gen)?;
    let copy = tape.scale(copy, not)?;
    Ok(tape.add(gen, copy)?)
}

/// Encoder output for one attention head.
#[derive(Clone, Debug)]
pub struct Head {
    pub states: Var,
    pub projected: Var,
    pub ext_ids: Vec<usize>,
    pub len: usize,
}

/// Encoded source: one head (two for the bifocal variant, query first; the
/// rest head is `None` when that side is empty).
#[derive(Clone, Debug)]
pub struct Encoded {
    pub heads: Vec<Option<Head>>,
    pub initial: LstmState,
    pub ext: ExtendedVocab,
}

/// One decoder step. `probs` is over `V` for the vanilla variant and over
/// `V′` otherwise.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub probs: Var,
    pub logits: Var,
    pub attention: Vec<Option<Var>>,
    pub p_gen: Option<Var>,
    pub lambda: Option<Var>,
    pub state: LstmState,
}

/// Dropout settings for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub attention: f64,
}

impl Dropout {
    pub const OFF: Dropout = Dropout { rate: 0.0, attention: 0.0 };

    fn active(&self) -> bool {
        self.rate > 0.0 || self.attention > 0.0
    }
}

#[derive(Clone, Debug)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub params: ParamSet,
    source_embedding: ParamId,
    target_embedding: ParamId,
    encoder: LstmCell,
    query_encoder: Option<LstmCell>,
    decoder: LstmCell,
    attention: Attention,
    query_attention: Option<Attention>,
    combine: Linear,
    generator: Linear,
    gate: Option<Linear>,
}

impl Seq2SeqModel {
    pub fn new(config: ModelConfig, source_vocab: Vocabulary, target_vocab: Vocabulary) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let (e, h, a, r) = (config.embed_dim, config.hidden, config.attention_dim, config.init_range);
        let mut params = ParamSet::new();
        let mut init = Initializer::new(config.seed);
        let source_embedding = params.add_uniform("source_embedding", &[source_vocab.len(), e], r, &mut init)?;
        let target_embedding = params.add_uniform("target_embedding", &[target_vocab.len(), e], r, &mut init)?;
        let bifocal = config.variant == Variant::Bifocal;
        let encoder = LstmCell::new(&mut params, "encoder", e, h, r, &mut init)?;
        let query_encoder = if bifocal {
            Some(LstmCell::new(&mut params, "query_encoder", e, h, r, &mut init)?)
        } else {
            None
        };
        let decoder = LstmCell::new(&mut params, "decoder", e, h, r, &mut init)?;
        for cell in [Some(&encoder), query_encoder.as_ref(), Some(&decoder)].into_iter().flatten() {
            // forget gate starts open
            params.value_mut(cell.bias).data_mut()[h..2 * h].fill(1.0);
        }
        let attention = Attention::new(&mut params, "attention", h, a, r, &mut init)?;
        let query_attention = if bifocal {
            Some(Attention::new(&mut params, "query_attention", h, a, r, &mut init)?)
        } else {
            None
        };
        let ctx = if bifocal { 2 * h } else { h };
        let combine = Linear::new(&mut params, "combine", ctx + h, h, true, r, &mut init)?;
        let generator = Linear::new(&mut params, "generator", h, target_vocab.len(), true, r, &mut init)?;
        let gate = match config.variant {
            Variant::Vanilla => None,
            Variant::Copy => Some(Linear::new(&mut params, "gate", ctx + h + e, 1, true, r, &mut init)?),
            Variant::Bifocal => Some(Linear::new(&mut params, "gate", ctx + h + e, 2, true, r, &mut init)?),
        };
        Ok(Self {
            config,
            source_vocab,
            target_vocab,
            params,
            source_embedding,
            target_embedding,
            encoder,
            query_encoder,
            decoder,
            attention,
            query_attention,
            combine,
            generator,
            gate,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn source_embedding(&self) -> ParamId {
        self.source_embedding
    }

    pub fn target_embedding(&self) -> ParamId {
        self.target_embedding
    }

    pub fn attention(&self) -> &Attention {
        &self.attention
    }

    pub fn gate(&self) -> Option<&Linear> {
        self.gate.as_ref()
    }

    pub fn extended_vocab(&self, input: &EncoderInput) -> ExtendedVocab {
        match self.variant() {
            Variant::Vanilla => ExtendedVocab::new(&self.target_vocab, &[]),
            Variant::Copy => ExtendedVocab::new(&self.target_vocab, &[&input.tokens]),
            Variant::Bifocal => ExtendedVocab::new(&self.target_vocab, &[input.query_tokens(), &input.rest_tokens()]),
        }
    }

    /// Width of the output distribution for this source.
    pub fn output_width(&self, ext: &ExtendedVocab) -> usize {
        match self.variant() {
            Variant::Vanilla => self.target_vocab.len(),
            _ => ext.len(),
        }
    }

    /// Runs one LSTM over `tokens`, returning every hidden state `[T, H]`
    /// and the final state.
    pub fn encode_tokens(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cell: &LstmCell,
        tokens: &[String],
        dropout: Dropout,
        rng: &mut dyn RngCore,
    ) -> Result<(Var, LstmState), Seq2SeqError> {
        if tokens.is_empty() {
            return Err(Seq2SeqError::EmptyInput);
        }
        let ids: Vec<usize> = tokens.iter().map(|t| self.source_vocab.id_or_unk(t)).collect();
        let table = tape.param(params, self.source_embedding);
        let xs = tape.embedding(table, &ids)?;
        let xs = tape.dropout(xs, dropout.rate, dropout.active(), rng)?;
        let init = cell.zero_state(tape)?;
        let (states, last) = cell.run(tape, params, xs, init)?;
        let hs: Vec<Var> = states.iter().map(|s| s.h).collect();
        Ok((tape.concat(&hs, 0)?, last))
    }

    /// Encoder hidden states `h_1..h_T` of the main encoder, as rows.
    pub fn encode(&self, input: &EncoderInput) -> Result<Vec<Vec<f64>>, Seq2SeqError> {
        let mut tape = Tape::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let (states, _) = self.encode_tokens(&mut tape, &self.params, &self.encoder, &input.tokens, Dropout::OFF, &mut rng)?;
        let t = tape.value(states);
        Ok((0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect())
    }

    fn head(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        cell: &LstmCell,
        att: &Attention,
        tokens: &[String],
        ext: &ExtendedVocab,
        dropout: Dropout,
        rng: &mut dyn RngCore,
    ) -> Result<(Head, LstmState), Seq2SeqError> {
        let (states, last) = self.encode_tokens(tape, params, cell, tokens, dropout, rng)?;
        let projected = att.project(tape, params, states)?;
        let head = Head {
            states,
            projected,
            ext_ids: ext.ids(&self.target_vocab, tokens),
            len: tokens.len(),
        };
        Ok((head, last))
    }

    pub fn encode_source(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        input: &EncoderInput,
        dropout: Dropout,
        rng: &mut dyn RngCore,
    ) -> Result<Encoded, Seq2SeqError> {
        let ext = self.extended_vocab(input);
        match (&self.query_encoder, &self.query_attention) {
            (Some(qe), Some(qa)) => {
                let rest = input.rest_tokens();
                self.bifocal_encode(tape, params, input.query_tokens(), &rest, ext, (qe, qa), dropout, rng)
            }
            _ => {
                let (head, last) = self.head(tape, params, &self.encoder, &self.attention, &input.tokens, &ext, dropout, rng)?;
                Ok(Encoded { heads: vec![Some(head)], initial: last, ext })
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn bifocal_encode(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        query: &[String],
        rest: &[String],
        ext: ExtendedVocab,
        (qe, qa): (&LstmCell, &Attention),
        dropout: Dropout,
        rng: &mut dyn RngCore,
    ) -> Result<Encoded, Seq2SeqError> {
        let (qh, qlast) = self.head(tape, params, qe, qa, query, &ext, dropout, rng)?;
        if rest.is_empty() {
            return Ok(Encoded { heads: vec![Some(qh), None], initial: qlast, ext });
        }
        let (rh, rlast) = self.head(tape, params, &self.encoder, &self.attention, rest, &ext, dropout, rng)?;
        let initial = LstmState {
            h: tape.add(qlast.h, rlast.h)?,
            c: tape.add(qlast.c, rlast.c)?,
        };
        Ok(Encoded { heads: vec![Some(qh), Some(rh)], initial, ext })
    }

    /// Bifocal encoding of explicit query and rest token lists.
    pub fn bifocal_encode_tokens(
        &self,
        tape: &mut Tape,
        query: &[String],
        rest: &[String],
    ) -> Result<Encoded, Seq2SeqError> {
        let (Some(qe), Some(qa)) = (&self.query_encoder, &self.query_attention) else {
            return Err(Seq2SeqError::WrongVariant { expected: Variant::Bifocal, found: self.variant() });
        };
        let ext = ExtendedVocab::new(&self.target_vocab, &[query, rest]);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        self.bifocal_encode(tape, &self.params, query, rest, ext, (qe, qa), Dropout::OFF, &mut rng)
    }

    /// One decoder step from the previous output id (extended ids are fed
    /// back as `<unk>`).
    #[allow(clippy::too_many_arguments)]
    pub fn decode_step(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        enc: &Encoded,
        prev: usize,
        state: LstmState,
        dropout: Dropout,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutput, Seq2SeqError> {
        let train = dropout.active();
        let h = self.config.hidden;
        let prev = if prev < self.target_vocab.len() { prev } else { UNK_ID };
        let table = tape.param(params, self.target_embedding);
        let emb = tape.embedding(table, &[prev])?;
        let emb = tape.dropout(emb, dropout.rate, train, rng)?;
        let state = self.decoder.step(tape, params, emb, state)?;
        let s = state.h;

        let mut attention = Vec::with_capacity(enc.heads.len());
        let mut contexts = Vec::with_capacity(enc.heads.len());
        for (i, head) in enc.heads.iter().enumerate() {
            let att = if enc.heads.len() == 2 && i == 0 {
                self.query_attention.as_ref().unwrap_or(&self.attention)
            } else {
                &self.attention
            };
            match head {
                Some(head) => {
                    let (a, _) = attention_step(tape, params, att, head.states, head.projected, s)?;
                    let a_ctx = tape.dropout(a, dropout.attention, train, rng)?;
                    contexts.push(tape.matmul(a_ctx, head.states)?);
                    attention.push(Some(a));
                }
                None => {
                    contexts.push(tape.constant(Tensor::zeros(&[1, h]))?);
                    attention.push(None);
                }
            }
        }
        let mut parts = contexts.clone();
        parts.push(s);
        let joined = tape.concat(&parts, 1)?;
        let hidden = self.combine.forward(tape, params, joined)?;
        let hidden = tape.tanh(hidden)?;
        let hidden = tape.dropout(hidden, dropout.rate, train, rng)?;
        let logits = self.generator.forward(tape, params, hidden)?;
        let p_vocab = tape.softmax(logits)?;

        let Some(gate) = &self.gate else {
            return Ok(StepOutput { probs: p_vocab, logits, attention, p_gen: None, lambda: None, state });
        };
        let mut gparts = contexts;
        gparts.push(s);
        gparts.push(emb);
        let gin = tape.concat(&gparts, 1)?;
        let g = gate.forward(tape, params, gin)?;
        let width = enc.ext.len();
        match self.variant() {
            Variant::Bifocal => {
                let p_gen = tape.slice_cols(g, 0, 1)?;
                let p_gen = tape.sigmoid(p_gen)?;
                let lambda = tape.slice_cols(g, 1, 2)?;
                let lambda = tape.sigmoid(lambda)?;
                let q = enc.heads[0].as_ref().ok_or(Seq2SeqError::EmptyInput)?;
                let qa = attention[0].ok_or(Seq2SeqError::EmptyInput)?;
                let rest = match (&enc.heads[1], attention[1]) {
                    (Some(r), Some(ra)) => Some((ra, r.ext_ids.as_slice())),
                    _ => None,
                };
                let lambda_used = if rest.is_some() { lambda } else { tape.constant(Tensor::scalar(1.0))? };
                let probs = bifocal_mixture(tape, p_vocab, p_gen, lambda_used, (qa, &q.ext_ids), rest, width)?;
                Ok(StepOutput { probs, logits, attention, p_gen: Some(p_gen), lambda: Some(lambda_used), state })
            }
            _ => {
                let p_gen = tape.sigmoid(g)?;
                let head = enc.heads[0].as_ref().ok_or(Seq2SeqError::EmptyInput)?;
                let a = attention[0].ok_or(Seq2SeqError::EmptyInput)?;
                let probs = copy_mixture(tape, p_vocab, p_gen, a, &head.ext_ids, width)?;
                Ok(StepOutput { probs, logits, attention, p_gen: Some(p_gen), lambda: None, state })
            }
        }
    }

    /// Output ids of a target token list plus `</s>`: extended ids for
    /// copy variants, `<unk>` for tokens the model cannot produce.
    pub fn target_ids(&self, ext: &ExtendedVocab, target: &[String]) -> Vec<usize> {
        let mut ids: Vec<usize> = match self.variant() {
            Variant::Vanilla => target.iter().map(|t| self.target_vocab.id_or_unk(t)).collect(),
            _ => ext.ids(&self.target_vocab, target),
        };
        ids.push(EOS_ID);
        ids
    }

    /// Summed teacher-forced negative log-likelihood of `target` and the
    /// number of predicted tokens (including `</s>`).
    pub fn loss(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        input: &EncoderInput,
        target: &[String],
        dropout: Dropout,
        rng: &mut dyn RngCore,
    ) -> Result<(Var, usize), Seq2SeqError> {
        let enc = self.encode_source(tape, params, input, dropout, rng)?;
        let ids = self.target_ids(&enc.ext, &target[..target.len().min(self.config.max_target_len)]);
        let mut state = enc.initial;
        let mut prev = BOS_ID;
        let mut terms = Vec::with_capacity(ids.len());
        for &y in &ids {
            let out = self.decode_step(tape, params, &enc, prev, state, dropout, rng)?;
            terms.push(match self.variant() {
                Variant::Vanilla => tape.cross_entropy_logits(out.logits, y)?,
                _ => tape.cross_entropy_probs(out.probs, y)?,
            });
            state = out.state;
            prev = y;
        }
        let all = tape.concat(&terms, 1)?;
        Ok((tape.sum(all)?, ids.len()))
    }

    /// Teacher-forced output distributions and gold ids, in eval mode.
    pub fn teacher_forced_distributions(
        &self,
        input: &EncoderInput,
        target: &[String],
    ) -> Result<Vec<(Vec<f64>, usize)>, Seq2SeqError> {
        let mut tape = Tape::new();
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let enc = self.encode_source(&mut tape, &self.params, input, Dropout::OFF, &mut rng)?;
        let ids = self.target_ids(&enc.ext, &target[..target.len().min(self.config.max_target_len)]);
        let mut state = enc.initial;
        let mut prev = BOS_ID;
        let mut out = Vec::with_capacity(ids.len());
        for &y in &ids {
            let step = self.decode_step(&mut tape, &self.params, &enc, prev, state, Dropout::OFF, &mut rng)?;
            out.push((tape.value(step.probs).data().to_vec(), y));
            state = step.state;
            prev = y;
        }
        Ok(out)
    }
}
