//! Compares greedy decoding, beam search, and exhaustive search on a toy
//! model, with and without shallow n-gram language-model fusion. A beam
//! wide enough to hold the whole hypothesis tree must reproduce the
//! exhaustive optimum exactly; width 1 must reproduce greedy.
//!
//!     cargo run --example beam_decoding

use hatl_lab::decode::{beam_search_detailed, exhaustive_search, greedy_decode, BeamConfig};
use hatl_lab::error::Result;
use hatl_lab::mat::Mat;
use hatl_lab::model::{Model, ModelConfig};
use hatl_lab::ngram::NGramLM;
use hatl_lab::rng::Rng;

fn main() -> Result<()> {
    let mut rng = Rng::seed_from(9);
    let model = Model::build(
        ModelConfig {
            d_in: 4,
            d_model: 8,
            n_backbone: 2,
            n_encoder: 1,
            n_decoder: 1,
            v_gloss: 4,
            v_text: 6,
            max_text_len: 5,
        },
        5,
    )?;
    let frames = Mat::from_fn(6, 4, |_, _| rng.normal());

    // An LM trained on a skewed corpus: sentences start with token 3 and
    // alternate with token 2, so fusion should pull the decoder toward
    // that pattern.
    let corpus: Vec<Vec<usize>> = (0..40)
        .map(|i| {
            if i % 4 == 0 {
                vec![3, 2]
            } else {
                vec![3, 2, 3, 2]
            }
        })
        .collect();
    let lm = NGramLM::train(&corpus, 3, 6)?;

    let greedy = greedy_decode(&model, &frames, 4)?;
    println!("greedy            : {greedy:?}");

    for (label, width, lm_weight, lm_ref) in [
        ("beam 1 (no LM)   ", 1usize, 0.0, None),
        ("beam 8 (no LM)   ", 8, 0.0, None),
        ("beam 8 + LM      ", 8, 0.7, Some(&lm)),
    ] {
        let cfg = BeamConfig {
            width,
            max_len: 4,
            lm_weight,
            ..BeamConfig::default()
        };
        let hyp = beam_search_detailed(&model, &frames, &cfg, lm_ref)?;
        println!(
            "{label}: {:?}  model lp {:+.4}  lm lp {:+.4}  score {:+.4}",
            hyp.tokens, hyp.model_lp, hyp.lm_lp, hyp.score
        );
    }

    // Ground truth by enumerating every sequence up to the length cap.
    let cfg = BeamConfig {
        width: 8,
        max_len: 4,
        lm_weight: 0.7,
        ..BeamConfig::default()
    };
    let best = exhaustive_search(&model, &frames, &cfg, Some(&lm))?;
    println!(
        "exhaustive + LM   : {:?}  score {:+.4}",
        best.tokens, best.score
    );

    // Widening the beam to the tree size makes the match exact.
    let wide = BeamConfig { width: 1000, ..cfg };
    let hyp = beam_search_detailed(&model, &frames, &wide, Some(&lm))?;
    println!(
        "beam 1000 + LM    : {:?}  score {:+.4}  (equals exhaustive: {})",
        hyp.tokens,
        hyp.score,
        hyp.tokens == best.tokens && (hyp.score - best.score).abs() < 1e-12
    );
    Ok(())
}
