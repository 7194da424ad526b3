//! Demonstrates the alignment loss: a frame-wise gloss classifier is
//! scored against a target sequence by summing the probability of every
//! frame labelling that collapses (repeats merged, blanks dropped) to
//! that sequence. The dynamic program is checked against literal path
//! enumeration, which is feasible at this size.
//!
//!     cargo run --example ctc_alignment

use hatl_lab::ctc::{
    collapse, ctc_grad, ctc_loss, path_enumeration_log_likelihood, FrameLogProbs, GlossTarget,
};
use hatl_lab::error::Result;
use hatl_lab::mat::Mat;
use hatl_lab::rng::Rng;

fn main() -> Result<()> {
    let mut rng = Rng::seed_from(42);

    // 5 frames, 3 symbols plus the blank at id 0.
    let logits = Mat::from_fn(5, 4, |_, _| rng.normal());
    let lp = FrameLogProbs::from_logits(&logits);
    let target = GlossTarget::new(vec![1, 2, 1])?;

    let loss = ctc_loss(&lp, &target)?;
    let brute = path_enumeration_log_likelihood(&lp, &target)?;
    println!("dynamic-program loss : {loss:.12}");
    println!("path-enumeration loss: {:.12}", -brute);
    println!("sequence probability : {:.6}", (-loss).exp());

    // A few labellings and what they collapse to.
    println!("\ncollapse examples:");
    for path in [
        vec![1, 1, 0, 2, 1],
        vec![0, 1, 2, 2, 1],
        vec![1, 2, 0, 0, 1],
        vec![1, 2, 1, 1, 1],
    ] {
        println!("  {:?} -> {:?}", path, collapse(&path));
    }

    // The analytic gradient w.r.t. the logits drives training; its row
    // sums vanish because probabilities are normalized per frame.
    let grad = ctc_grad(&lp, &target)?;
    println!("\ngradient w.r.t. frame logits ({}x{}):", grad.rows(), grad.cols());
    for t in 0..grad.rows() {
        let row: Vec<String> = grad.row(t).iter().map(|v| format!("{v:+.4}")).collect();
        println!("  frame {t}: [{}]", row.join(", "));
    }

    // Infeasible targets (too few frames for the required blanks between
    // repeated symbols) are rejected instead of returning -inf.
    let short = FrameLogProbs::from_logits(&Mat::from_fn(2, 4, |_, _| rng.normal()));
    let repeat = GlossTarget::new(vec![1, 1])?;
    match ctc_loss(&short, &repeat) {
        Err(e) => println!("\n2 frames cannot spell [1, 1]: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
