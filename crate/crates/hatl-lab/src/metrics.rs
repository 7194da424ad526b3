//! Translation quality metrics: corpus BLEU-n and ROUGE-L.
//!
//! BLEU uses micro-averaged clipped n-gram counts pooled over the whole
//! corpus, uniform weights 1/max_n, and the standard brevity penalty.
//! A pooled zero precision yields BLEU = 0; add-one smoothing exists as an
//! opt-in for monitoring very early training and is off everywhere else.
//!
//! Tokens are whatever equality-comparable unit the caller already has
//! (integer ids from the generator, or strings from whitespace splitting);
//! no normalization is applied here.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Precision smoothing for [`corpus_bleu_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Eq.-faithful behavior: any pooled zero precision makes BLEU 0.
    None,
    /// Adds one to every pooled numerator and denominator. Only meant for
    /// monitoring runs whose early epochs would otherwise flatline at 0.
    AddOne,
}

/// Corpus BLEU decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Pooled modified precisions p_1..p_max_n.
    pub precisions: Vec<f64>,
    /// Brevity penalty.
    pub bp: f64,
    /// bp * geometric mean of the precisions (0 if any precision is 0).
    pub bleu: f64,
    /// Total candidate token count.
    pub c: usize,
    /// Total reference token count.
    pub r: usize,
}

/// Brevity penalty: 1 when the candidate corpus is longer than the
/// reference corpus, e^(1 - r/c) otherwise; c = 0 scores 0 by convention.
pub fn brevity_penalty(c: usize, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::Argument(
            "brevity penalty needs a non-empty reference corpus".into(),
        ));
    }
    if c > r {
        Ok(1.0)
    } else if c == 0 {
        Ok(0.0)
    } else {
        Ok((1.0 - r as f64 / c as f64).exp())
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU with strict (unsmoothed) precisions.
pub fn corpus_bleu<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<BleuReport> {
    corpus_bleu_with(candidates, references, max_n, Smoothing::None)
}

pub fn corpus_bleu_with<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuReport> {
    if candidates.len() != references.len() {
        return Err(Error::Argument(format!(
            "candidate/reference count mismatch: {} vs {}",
            candidates.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Argument("max_n must be at least 1".into()));
    }
    if references.iter().any(|r| r.is_empty()) {
        return Err(Error::Argument("references must be non-empty".into()));
    }

    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();

    // Pooled clipped counts: per order, sum over pairs of
    // min(candidate count, reference count) per n-gram type.
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    for (cand, reference) in candidates.iter().zip(references) {
        for n in 1..=max_n {
            let cand_counts = ngram_counts(cand, n);
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in &cand_counts {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += (*count).min(clip);
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }

    let precisions: Vec<f64> = (0..max_n)
        .map(|i| match smoothing {
            Smoothing::None => {
                if total[i] == 0 {
                    0.0
                } else {
                    matched[i] as f64 / total[i] as f64
                }
            }
            Smoothing::AddOne => (matched[i] + 1) as f64 / (total[i] + 1) as f64,
        })
        .collect();

    let bp = brevity_penalty(c, r)?;
    let bleu = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let w = 1.0 / max_n as f64;
        bp * (precisions.iter().map(|p| w * p.ln()).sum::<f64>()).exp()
    };

    Ok(BleuReport {
        precisions,
        bp,
        bleu,
        c,
        r,
    })
}

/// Longest common subsequence length (classical O(|a|*|b|) table).
pub fn lcs_length<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L for one candidate/reference pair: 2*LCS / (|candidate| + |reference|).
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Argument("ROUGE-L reference must be non-empty".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let lcs = lcs_length(candidate, reference);
    Ok(2.0 * lcs as f64 / (candidate.len() + reference.len()) as f64)
}

/// Mean per-pair ROUGE-L over a corpus.
pub fn corpus_rouge_l<T: Eq>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Argument(format!(
            "candidate/reference count mismatch: {} vs {}",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Argument("empty corpus".into()));
    }
    let mut sum = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        sum += rouge_l(c, r)?;
    }
    Ok(sum / candidates.len() as f64)
}

/// The five numbers the `eval` subcommand reports.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub bleu: BleuReport,
    pub rouge_l: f64,
}

impl EvalSummary {
    /// BLEU-n as the standard cumulative score over orders 1..=n (same
    /// pooled precisions and brevity penalty, weights 1/n), not the raw
    /// order-n precision.
    pub fn bleu_n(&self, n: usize) -> f64 {
        let upto = &self.bleu.precisions[..n];
        if upto.iter().any(|&q| q == 0.0) {
            return 0.0;
        }
        let w = 1.0 / n as f64;
        self.bleu.bp * upto.iter().map(|q| w * q.ln()).sum::<f64>().exp()
    }

    /// `NAME<TAB>VALUE` lines with 4 fraction digits, in report order.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(5);
        for n in 1..=self.bleu.precisions.len() {
            out.push(format!("BLEU-{}\t{:.4}", n, self.bleu_n(n)));
        }
        out.push(format!("ROUGE-L\t{:.4}", self.rouge_l));
        out
    }
}

/// Scores a corpus with BLEU-1..4 and ROUGE-L.
pub fn evaluate_corpus<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<T>],
) -> Result<EvalSummary> {
    Ok(EvalSummary {
        bleu: corpus_bleu(candidates, references, 4)?,
        rouge_l: corpus_rouge_l(candidates, references)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_candidate_scores_one() {
        let c = vec![toks("w x y z q")];
        let r = c.clone();
        let rep = corpus_bleu(&c, &r, 4).unwrap();
        assert_eq!(rep.bleu, 1.0);
        assert_eq!(rep.bp, 1.0);
        assert!(rep.precisions.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn disjoint_vocab_scores_zero() {
        let c = vec![toks("a b c d")];
        let r = vec![toks("e f g h")];
        let rep = corpus_bleu(&c, &r, 4).unwrap();
        assert_eq!(rep.bleu, 0.0);
    }

    #[test]
    fn short_candidate_gets_brevity_penalty() {
        // All precisions 1, bp = e^(1 - 5/4).
        let c = vec![toks("a b c d")];
        let r = vec![toks("a b c d e")];
        let rep = corpus_bleu(&c, &r, 4).unwrap();
        for p in &rep.precisions {
            assert_eq!(*p, 1.0);
        }
        let expected = (1.0f64 - 5.0 / 4.0).exp();
        assert!((rep.bp - expected).abs() < 1e-12);
        assert!((rep.bleu - 0.7788).abs() < 1e-4);
    }

    #[test]
    fn brevity_penalty_cases() {
        assert_eq!(brevity_penalty(10, 8).unwrap(), 1.0);
        assert!((brevity_penalty(4, 5).unwrap() - (-0.25f64).exp()).abs() < 1e-15);
        assert_eq!(brevity_penalty(5, 5).unwrap(), 1.0);
        assert_eq!(brevity_penalty(0, 5).unwrap(), 0.0);
        assert!(brevity_penalty(3, 0).is_err());
    }

    #[test]
    fn clipping_limits_repeated_ngrams() {
        // "the the the the" vs "the cat": unigram matched count clips at 1.
        let c = vec![toks("the the the the")];
        let r = vec![toks("the cat")];
        let rep = corpus_bleu(&c, &r, 1).unwrap();
        assert!((rep.precisions[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smoothing_only_changes_zero_risk_cases() {
        let c = vec![toks("a b")];
        let r = vec![toks("a c")];
        let strict = corpus_bleu_with(&c, &r, 2, Smoothing::None).unwrap();
        assert_eq!(strict.bleu, 0.0);
        let smoothed = corpus_bleu_with(&c, &r, 2, Smoothing::AddOne).unwrap();
        assert!(smoothed.bleu > 0.0);
    }

    #[test]
    fn length_mismatch_is_an_argument_error() {
        let c = vec![toks("a")];
        let r: Vec<Vec<&str>> = vec![];
        assert!(matches!(
            corpus_bleu(&c, &r, 4),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l(&toks("p q r s t"), &toks("p q r s t")).unwrap(), 1.0);
        let score = rouge_l(&toks("a b c"), &toks("a c")).unwrap();
        assert!((score - 0.8).abs() < 1e-15);
        assert_eq!(rouge_l(&toks("a b"), &toks("x y")).unwrap(), 0.0);
        assert_eq!(rouge_l(&Vec::<&str>::new(), &toks("a")).unwrap(), 0.0);
        assert!(rouge_l(&toks("a"), &Vec::<&str>::new()).is_err());
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(&toks("a b c"), &toks("a b c")), 3);
        assert_eq!(lcs_length(&toks("a b c d"), &toks("b d")), 2);
        assert_eq!(lcs_length(&Vec::<&str>::new(), &toks("a b")), 0);
    }

    /// Brute-force LCS: enumerate all subsequences of the shorter side and
    /// test containment in the longer side.
    fn lcs_brute(a: &[u8], b: &[u8]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let mut best = 0;
        for mask in 0u32..(1 << short.len()) {
            let sub: Vec<u8> = short
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &t)| t)
                .collect();
            if sub.len() <= best {
                continue;
            }
            let mut it = long.iter();
            if sub.iter().all(|s| it.any(|l| l == s)) {
                best = sub.len();
            }
        }
        best
    }

    /// Independent single-pair BLEU oracle: linear-scan n-gram counting,
    /// no hash maps, direct formula evaluation.
    fn sentence_bleu_oracle(cand: &[u8], reference: &[u8], max_n: usize) -> f64 {
        if cand.is_empty() {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 1..=max_n {
            if cand.len() < n {
                return 0.0;
            }
            let grams: Vec<&[u8]> = cand.windows(n).collect();
            let mut matched = 0usize;
            let mut counted: Vec<&[u8]> = Vec::new();
            for g in &grams {
                if counted.contains(g) {
                    continue;
                }
                counted.push(g);
                let in_cand = grams.iter().filter(|x| *x == g).count();
                let in_ref = if reference.len() >= n {
                    reference.windows(n).filter(|x| x == g).count()
                } else {
                    0
                };
                matched += in_cand.min(in_ref);
            }
            if matched == 0 {
                return 0.0;
            }
            log_sum += (matched as f64 / grams.len() as f64).ln() / max_n as f64;
        }
        let bp = if cand.len() > reference.len() {
            1.0
        } else {
            (1.0 - reference.len() as f64 / cand.len() as f64).exp()
        };
        bp * log_sum.exp()
    }

    #[test]
    fn single_pair_bleu_matches_independent_oracle() {
        let mut rng = Rng::seed_from(2024);
        let mut nonzero = 0;
        for _ in 0..200 {
            let clen = rng.range_inclusive(1, 9);
            let rlen = rng.range_inclusive(1, 9);
            let cand: Vec<u8> = (0..clen).map(|_| rng.below(3) as u8).collect();
            let reference: Vec<u8> = (0..rlen).map(|_| rng.below(3) as u8).collect();
            let max_n = rng.range_inclusive(1, 4);
            let ours = corpus_bleu(&[cand.clone()], &[reference.clone()], max_n)
                .unwrap()
                .bleu;
            let oracle = sentence_bleu_oracle(&cand, &reference, max_n);
            assert!(
                (ours - oracle).abs() < 1e-12,
                "cand {cand:?} ref {reference:?} max_n {max_n}: {ours} vs {oracle}"
            );
            if oracle > 0.0 {
                nonzero += 1;
            }
        }
        // The comparison must exercise real scores, not only strict zeros.
        assert!(nonzero >= 10, "only {nonzero} informative cases");
    }

    #[test]
    fn eval_summary_lines_format() {
        let c = vec![toks("a b c d")];
        let r = vec![toks("a b c d e")];
        let summary = evaluate_corpus(&c, &r).unwrap();
        let lines = summary.lines();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], format!("BLEU-4\t{:.4}", summary.bleu.bleu));
        assert!(lines[0].starts_with("BLEU-1\t"));
        assert!(lines[4].starts_with("ROUGE-L\t"));
        for line in &lines {
            let val = line.split('\t').nth(1).unwrap();
            assert_eq!(val.split('.').nth(1).unwrap().len(), 4);
        }
    }

    proptest! {
        #[test]
        fn bleu_is_permutation_invariant(
            pairs in prop::collection::vec(
                (prop::collection::vec(0u8..4, 1..6), prop::collection::vec(0u8..4, 1..6)),
                1..6,
            ),
            seed in 0u64..1000,
        ) {
            let cands: Vec<Vec<u8>> = pairs.iter().map(|(c, _)| c.clone()).collect();
            let refs: Vec<Vec<u8>> = pairs.iter().map(|(_, r)| r.clone()).collect();
            let a = corpus_bleu(&cands, &refs, 2).unwrap();

            let mut order: Vec<usize> = (0..pairs.len()).collect();
            Rng::seed_from(seed).shuffle(&mut order);
            let cands_p: Vec<Vec<u8>> = order.iter().map(|&i| cands[i].clone()).collect();
            let refs_p: Vec<Vec<u8>> = order.iter().map(|&i| refs[i].clone()).collect();
            let b = corpus_bleu(&cands_p, &refs_p, 2).unwrap();

            prop_assert!((a.bleu - b.bleu).abs() < 1e-12);
            prop_assert_eq!(a.c, b.c);
            prop_assert_eq!(a.r, b.r);
        }

        #[test]
        fn scores_stay_in_unit_interval(
            cand in prop::collection::vec(0u8..5, 0..10),
            reference in prop::collection::vec(0u8..5, 1..10),
        ) {
            let bleu = corpus_bleu(&[cand.clone()], &[reference.clone()], 4).unwrap().bleu;
            prop_assert!((0.0..=1.0).contains(&bleu));
            let rl = rouge_l(&cand, &reference).unwrap();
            prop_assert!((0.0..=1.0).contains(&rl));
        }

        #[test]
        fn lcs_symmetric_bounded_and_matches_brute_force(
            a in prop::collection::vec(0u8..3, 0..8),
            b in prop::collection::vec(0u8..3, 0..8),
        ) {
            let l = lcs_length(&a, &b);
            prop_assert_eq!(l, lcs_length(&b, &a));
            prop_assert!(l <= a.len().min(b.len()));
            prop_assert_eq!(l, lcs_brute(&a, &b));
        }
    }
}
