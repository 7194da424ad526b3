//! Scores toy token sequences with corpus BLEU (pooled clipped n-gram
//! counts, brevity penalty, optional add-one smoothing) and ROUGE-L
//! (LCS-based F measure), the two metrics tracked by the benchmark.
//!
//!     cargo run --example score_translations

use hatl_lab::error::Result;
use hatl_lab::metrics::{
    corpus_bleu, corpus_bleu_with, corpus_rouge_l, evaluate_corpus, rouge_l, Smoothing,
};

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn main() -> Result<()> {
    // The classic short-candidate fixture: all precisions are 1, so the
    // whole penalty comes from length (4 vs 5 tokens).
    let cand = vec![toks("a b c d")];
    let refs = vec![toks("a b c d e")];
    let report = corpus_bleu(&cand, &refs, 4)?;
    println!("candidate 'a b c d' vs reference 'a b c d e':");
    println!("  precisions: {:?}", report.precisions);
    println!("  brevity penalty: {:.6}", report.bp);
    println!("  BLEU-4: {:.6}\n", report.bleu);

    // Unsmoothed BLEU zeroes out when any order has no matches; add-one
    // smoothing keeps short outputs comparable.
    let cand = vec![toks("a b x")];
    let refs = vec![toks("a b c")];
    let strict = corpus_bleu(&cand, &refs, 4)?;
    let smoothed = corpus_bleu_with(&cand, &refs, 4, Smoothing::AddOne)?;
    println!("candidate 'a b x' vs reference 'a b c':");
    println!("  strict BLEU-4  : {:.6} (a zero precision zeroes the product)", strict.bleu);
    println!("  add-one BLEU-4 : {:.6}\n", smoothed.bleu);

    // ROUGE-L rewards in-order coverage without requiring contiguity.
    println!("ROUGE-L 'a b c' vs 'a c'    : {:.4}", rouge_l(&toks("a b c"), &toks("a c"))?);
    println!("ROUGE-L 'c b a' vs 'a b c'  : {:.4}", rouge_l(&toks("c b a"), &toks("a b c"))?);
    println!(
        "corpus ROUGE-L (mean of pairs): {:.4}\n",
        corpus_rouge_l(
            &[toks("a b c"), toks("c b a")],
            &[toks("a c"), toks("a b c")]
        )?
    );

    // The combined summary used on every dev/test evaluation.
    let hyps = vec![vec![2usize, 4, 5], vec![3, 3, 6]];
    let refs = vec![vec![2usize, 4, 5], vec![3, 6]];
    let summary = evaluate_corpus(&hyps, &refs)?;
    println!("evaluation summary for two token sequences:");
    for line in summary.lines() {
        println!("  {line}");
    }
    Ok(())
}
