//! Inference-time decoding: greedy and beam-search text generation with
//! optional n-gram LM fusion, plus CTC gloss decoding with blank bias and
//! temperature.
//!
//! Beam hypotheses are compared by summed log-probability
//! `model + lm_weight * lm` with no length normalization. A hypothesis
//! finishes by emitting the end token (that event is part of both scores)
//! or by reaching `max_len` (no end-token term). Ties break on the token id
//! that created the hypothesis, then on hypothesis age (creation order), so
//! decoding is fully deterministic.

use crate::data::{TEXT_BOS, TEXT_EOS};
use crate::error::{Error, Result};
use crate::mat::{log_sum_exp, Mat};
use crate::model::{ForwardPass, Model};
use crate::ngram::NGramLM;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    pub lm_weight: f64,
    /// Maximum number of generated content tokens.
    pub max_len: usize,
    /// Subtracted from the blank log-probability in CTC gloss decoding.
    pub blank_bias: f64,
    /// Divides log-probabilities in CTC gloss decoding before the bias.
    pub temperature: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 8,
            lm_weight: 0.7,
            max_len: 16,
            blank_bias: 0.4,
            temperature: 0.9,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Argument("beam width must be >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Argument("temperature must be > 0".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Argument("max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Hypothesis returned by [`beam_search_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHypothesis {
    pub tokens: Vec<usize>,
    pub model_lp: f64,
    pub lm_lp: f64,
    /// `model_lp + lm_weight * lm_lp` (just `model_lp` without an LM).
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<usize>,
    model_lp: f64,
    lm_lp: f64,
    score: f64,
    /// Token that created this hypothesis; first tie-break key.
    last_token: usize,
    /// Creation order; second tie-break key.
    age: u64,
}

fn better(a: &Hyp, b: &Hyp) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .expect("hypothesis scores are never NaN")
        .then(a.last_token.cmp(&b.last_token))
        .then(a.age.cmp(&b.age))
}

fn log_softmax_slice(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&v| v - lse).collect()
}

/// Log-probabilities for the next token after `generated`, computed by
/// appending one decoder evaluation to the shared forward pass.
fn next_token_log_probs(
    model: &Model,
    pass: &mut ForwardPass,
    generated: &[usize],
) -> Result<Vec<f64>> {
    let mut prefix = Vec::with_capacity(generated.len() + 1);
    prefix.push(TEXT_BOS);
    prefix.extend_from_slice(generated);
    let logits = model.decode_text(pass, &prefix)?;
    let row = pass.tape.value(logits).row(prefix.len() - 1);
    Ok(log_softmax_slice(row))
}

/// Per-step argmax decoding with lowest-token-id tie-break; stops at the
/// end token or after `max_len` content tokens.
pub fn greedy_decode(model: &Model, frames: &Mat, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::Argument("max_len must be >= 1".into()));
    }
    if frames.rows() == 0 {
        return Err(Error::Argument("cannot decode empty frames".into()));
    }
    let mut pass = model.encode(frames)?;
    let steps = max_len.min(model.cfg().max_text_len - 1);
    let mut tokens: Vec<usize> = Vec::new();
    for _ in 0..steps {
        let lp = next_token_log_probs(model, &mut pass, &tokens)?;
        let mut best = 0usize;
        for (t, &v) in lp.iter().enumerate() {
            if v > lp[best] {
                best = t;
            }
        }
        if best == TEXT_EOS {
            break;
        }
        tokens.push(best);
    }
    Ok(tokens)
}

/// Beam search over text hypotheses; returns the best token sequence.
pub fn beam_search(
    model: &Model,
    frames: &Mat,
    cfg: &BeamConfig,
    lm: Option<&NGramLM>,
) -> Result<Vec<usize>> {
    Ok(beam_search_detailed(model, frames, cfg, lm)?.tokens)
}

/// Beam search exposing the winning hypothesis' model/LM scores.
pub fn beam_search_detailed(
    model: &Model,
    frames: &Mat,
    cfg: &BeamConfig,
    lm: Option<&NGramLM>,
) -> Result<ScoredHypothesis> {
    cfg.validate()?;
    if frames.rows() == 0 {
        return Err(Error::Argument("cannot decode empty frames".into()));
    }
    let lm_active = lm.is_some() && cfg.lm_weight != 0.0;
    let vocab = model.cfg().v_text;
    let steps = cfg.max_len.min(model.cfg().max_text_len - 1);

    let mut pass = model.encode(frames)?;
    let mut next_age: u64 = 0;
    let mut active = vec![Hyp {
        tokens: Vec::new(),
        model_lp: 0.0,
        lm_lp: 0.0,
        score: 0.0,
        last_token: 0,
        age: next_age,
    }];
    next_age += 1;
    let mut finished: Vec<Hyp> = Vec::new();

    for _ in 0..steps {
        if active.is_empty() {
            break;
        }
        let mut candidates: Vec<Hyp> = Vec::with_capacity(active.len() * vocab);
        for hyp in &active {
            let lp = next_token_log_probs(model, &mut pass, &hyp.tokens)?;
            for (tok, &token_lp) in lp.iter().enumerate() {
                let model_lp = hyp.model_lp + token_lp;
                let lm_lp = if lm_active {
                    hyp.lm_lp + lm.unwrap().log_prob(&hyp.tokens, tok)
                } else {
                    0.0
                };
                let score = if lm_active {
                    model_lp + cfg.lm_weight * lm_lp
                } else {
                    model_lp
                };
                let mut tokens = hyp.tokens.clone();
                if tok != TEXT_EOS {
                    tokens.push(tok);
                }
                candidates.push(Hyp {
                    tokens,
                    model_lp,
                    lm_lp,
                    score,
                    last_token: tok,
                    age: next_age,
                });
                next_age += 1;
            }
        }
        candidates.sort_by(better);
        candidates.truncate(cfg.width);
        active.clear();
        for cand in candidates {
            if cand.last_token == TEXT_EOS {
                finished.push(cand);
            } else {
                active.push(cand);
            }
        }
    }
    // Hypotheses that hit the length limit compete without an end-token
    // term, mirroring how arbitrary sequences are scored.
    finished.extend(active);
    finished.sort_by(better);
    let best = finished
        .into_iter()
        .next()
        .expect("beam always retains at least one hypothesis");
    Ok(ScoredHypothesis {
        tokens: best.tokens,
        model_lp: best.model_lp,
        lm_lp: best.lm_lp,
        score: best.score,
    })
}

/// Scores a given content-token sequence exactly as beam search would:
/// the end-of-sentence event is included only when the sequence is shorter
/// than the effective length limit.
pub fn score_sequence(
    model: &Model,
    frames: &Mat,
    tokens: &[usize],
    cfg: &BeamConfig,
    lm: Option<&NGramLM>,
) -> Result<ScoredHypothesis> {
    cfg.validate()?;
    let steps = cfg.max_len.min(model.cfg().max_text_len - 1);
    if tokens.len() > steps {
        return Err(Error::Argument(format!(
            "sequence length {} exceeds the decoder limit {steps}",
            tokens.len()
        )));
    }
    let with_eos = tokens.len() < steps;
    let mut pass = model.encode(frames)?;
    let mut prefix = Vec::with_capacity(tokens.len() + 1);
    prefix.push(TEXT_BOS);
    prefix.extend_from_slice(tokens);
    let logits = model.decode_text(&mut pass, &prefix)?;
    let values = pass.tape.value(logits);
    let mut model_lp = 0.0;
    for (i, &tok) in tokens.iter().enumerate() {
        model_lp += log_softmax_slice(values.row(i))[tok];
    }
    if with_eos {
        model_lp += log_softmax_slice(values.row(tokens.len()))[TEXT_EOS];
    }
    let lm_active = lm.is_some() && cfg.lm_weight != 0.0;
    let lm_lp = if lm_active {
        let lm = lm.unwrap();
        let mut lp = 0.0;
        for (i, &tok) in tokens.iter().enumerate() {
            lp += lm.log_prob(&tokens[..i], tok);
        }
        if with_eos {
            lp += lm.log_prob(tokens, TEXT_EOS);
        }
        lp
    } else {
        0.0
    };
    let score = if lm_active {
        model_lp + cfg.lm_weight * lm_lp
    } else {
        model_lp
    };
    Ok(ScoredHypothesis {
        tokens: tokens.to_vec(),
        model_lp,
        lm_lp,
        score,
    })
}

/// Reference implementation for small instances: scores every sequence of
/// non-end tokens up to the length limit and returns the best, using the
/// same scoring and tie-break (token id, then enumeration order) as beam
/// search. Guarded against combinatorial blow-up.
pub fn exhaustive_search(
    model: &Model,
    frames: &Mat,
    cfg: &BeamConfig,
    lm: Option<&NGramLM>,
) -> Result<ScoredHypothesis> {
    cfg.validate()?;
    let vocab = model.cfg().v_text;
    let steps = cfg.max_len.min(model.cfg().max_text_len - 1);
    let mut total: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..=steps {
        total += level;
        level = level.saturating_mul(vocab as u128);
        if total > 200_000 {
            return Err(Error::Argument(
                "instance too large for exhaustive search".into(),
            ));
        }
    }
    let mut best: Option<ScoredHypothesis> = None;
    // Depth-first in token order matches the beam's id-then-age tie-break.
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(tokens) = stack.pop() {
        let scored = score_sequence(model, frames, &tokens, cfg, lm)?;
        let replace = match &best {
            None => true,
            Some(b) => scored.score > b.score,
        };
        if replace {
            best = Some(scored);
        }
        if tokens.len() < steps {
            // Push in reverse so lower token ids are explored first.
            for tok in (0..vocab).rev() {
                if tok == TEXT_EOS {
                    continue;
                }
                let mut next = tokens.clone();
                next.push(tok);
                stack.push(next);
            }
        }
    }
    Ok(best.expect("the empty sequence is always scored"))
}

/// Best-path CTC gloss decoding: log-probabilities are divided by the
/// temperature, the blank log-probability is reduced by the bias, rows are
/// re-normalized, and the per-frame argmax path (lowest id on ties) is
/// collapsed by removing repeats and then blanks.
pub fn ctc_gloss_decode(lp: &crate::ctc::FrameLogProbs, cfg: &BeamConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut path = Vec::with_capacity(lp.frames());
    for t in 0..lp.frames() {
        let mut adjusted: Vec<f64> = (0..lp.symbols())
            .map(|v| lp.get(t, v) / cfg.temperature)
            .collect();
        adjusted[crate::ctc::BLANK] -= cfg.blank_bias;
        let normalized = log_softmax_slice(&adjusted);
        let mut best = 0usize;
        for (v, &x) in normalized.iter().enumerate() {
            if x > normalized[best] {
                best = v;
            }
        }
        path.push(best);
    }
    Ok(crate::ctc::collapse(&path))
}
