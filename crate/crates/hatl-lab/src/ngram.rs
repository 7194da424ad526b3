//! Add-k smoothed back-off n-gram language model over text token ids.
//!
//! The model predicts every text token except the start marker; sentence
//! starts are padded with [`TEXT_BOS`](crate::data::TEXT_BOS) context and
//! every sentence contributes a final end-of-sentence event. Probabilities
//! use the longest context with any observed continuation and add-k
//! smoothing (k = 0.1) within it, backing off to shorter contexts — down to
//! smoothed unigrams — when the context itself was never seen. Conditional
//! distributions therefore sum to one at every context.

use std::collections::HashMap;

use crate::data::{TEXT_BOS, TEXT_EOS};
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 4;
pub const ADD_K: f64 = 0.1;

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    by_token: HashMap<usize, u64>,
}

#[derive(Debug, Clone)]
pub struct NGramLM {
    order: usize,
    vocab_size: usize,
    k: f64,
    /// `levels[l]` maps length-`l` contexts to continuation counts.
    levels: Vec<HashMap<Vec<usize>, ContextCounts>>,
}

impl NGramLM {
    /// Trains on content-token sequences (no start/end markers; the
    /// end-of-sentence event is added internally). `vocab_size` is the full
    /// text vocabulary size so unseen tokens receive smoothed mass.
    pub fn train(corpus: &[Vec<usize>], order: usize, vocab_size: usize) -> Result<NGramLM> {
        if corpus.is_empty() {
            return Err(Error::Argument("LM training corpus is empty".into()));
        }
        if order == 0 {
            return Err(Error::Argument("LM order must be >= 1".into()));
        }
        if vocab_size <= TEXT_EOS {
            return Err(Error::Argument(format!(
                "text vocab size {vocab_size} cannot hold the end token"
            )));
        }
        let mut levels: Vec<HashMap<Vec<usize>, ContextCounts>> =
            (0..order).map(|_| HashMap::new()).collect();
        for sentence in corpus {
            if let Some(&bad) = sentence.iter().find(|&&t| t >= vocab_size || t == TEXT_BOS) {
                return Err(Error::Argument(format!(
                    "LM corpus token {bad} outside the predictable vocabulary"
                )));
            }
            let mut history: Vec<usize> = vec![TEXT_BOS; order - 1];
            for &tok in sentence.iter().chain(std::iter::once(&TEXT_EOS)) {
                for l in 0..order {
                    let ctx = history[history.len() - l..].to_vec();
                    let cell = levels[l].entry(ctx).or_default();
                    cell.total += 1;
                    *cell.by_token.entry(tok).or_insert(0) += 1;
                }
                if order > 1 {
                    history.remove(0);
                    history.push(tok);
                }
            }
        }
        Ok(NGramLM {
            order,
            vocab_size,
            k: ADD_K,
            levels,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of distinct predictable outcomes (everything but the start
    /// marker).
    fn support(&self) -> f64 {
        (self.vocab_size - 1) as f64
    }

    /// log p(token | context). `context` is the sequence of previous
    /// content tokens; start-of-sentence padding is applied internally.
    /// The start marker is never predictable and scores -inf.
    pub fn log_prob(&self, context: &[usize], token: usize) -> f64 {
        if token == TEXT_BOS || token >= self.vocab_size {
            return f64::NEG_INFINITY;
        }
        let mut padded: Vec<usize> = Vec::with_capacity(self.order - 1);
        if context.len() < self.order - 1 {
            padded.extend(std::iter::repeat(TEXT_BOS).take(self.order - 1 - context.len()));
            padded.extend_from_slice(context);
        } else {
            padded.extend_from_slice(&context[context.len() - (self.order - 1)..]);
        }
        // Longest context with observed continuations wins; the empty
        // context is always available as the final fallback.
        for l in (0..self.order).rev() {
            let ctx = &padded[padded.len() - l..];
            if let Some(cell) = self.levels[l].get(ctx) {
                let count = cell.by_token.get(&token).copied().unwrap_or(0) as f64;
                let denom = cell.total as f64 + self.k * self.support();
                return ((count + self.k) / denom).ln();
            }
        }
        // Unreachable for a trained model: the empty context has counts.
        f64::NEG_INFINITY
    }

    /// Total log-probability of a sentence of content tokens, including
    /// the end-of-sentence event.
    pub fn score_sequence(&self, tokens: &[usize]) -> f64 {
        let mut lp = 0.0;
        for (i, &tok) in tokens.iter().enumerate() {
            lp += self.log_prob(&tokens[..i], tok);
        }
        lp + self.log_prob(tokens, TEXT_EOS)
    }

    /// Perplexity over a corpus of content-token sentences; each sentence
    /// contributes `len + 1` events (the end marker counts).
    pub fn perplexity(&self, corpus: &[Vec<usize>]) -> Result<f64> {
        let mut total_lp = 0.0;
        let mut events = 0usize;
        for sentence in corpus {
            total_lp += self.score_sequence(sentence);
            events += sentence.len() + 1;
        }
        if events == 0 {
            return Err(Error::Argument("perplexity of an empty corpus".into()));
        }
        Ok((-total_lp / events as f64).exp())
    }
}

/// Spec'd entry point: 4-gram by default; see [`NGramLM::train`].
pub fn train_ngram_lm(corpus: &[Vec<usize>], order: usize, vocab_size: usize) -> Result<NGramLM> {
    NGramLM::train(corpus, order, vocab_size)
}
