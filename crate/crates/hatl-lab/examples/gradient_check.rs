//! Builds the composite training loss (alignment + translation + two
//! frame-classification auxiliaries) on the reverse-mode tape and checks
//! a few analytic parameter gradients against central finite differences.
//!
//!     cargo run --example gradient_check

use hatl_lab::ctc::GlossTarget;
use hatl_lab::data::TEXT_EOS;
use hatl_lab::error::Result;
use hatl_lab::losses::{attach_sample_loss, BatchNormalizers, LossWeights, SampleTargets};
use hatl_lab::mat::Mat;
use hatl_lab::model::{Model, ModelConfig};
use hatl_lab::rng::Rng;

fn loss_value(model: &Model, frames: &Mat, prefix: &[usize], t: &SampleTargets) -> Result<f64> {
    let (mut fp, text_logits) = model.forward(frames, prefix)?;
    let sl = attach_sample_loss(
        &mut fp.tape,
        text_logits,
        fp.enc_gloss_logits,
        fp.bb_frame_logits,
        t,
        &LossWeights::defaults(),
        &BatchNormalizers {
            samples: 1.0,
            text_tokens: 3.0,
            labeled_frames: 4.0,
        },
    )?;
    Ok(fp.tape.value(sl.root).scalar_value())
}

fn main() -> Result<()> {
    let model = Model::build(
        ModelConfig {
            d_in: 3,
            d_model: 6,
            n_backbone: 2,
            n_encoder: 1,
            n_decoder: 1,
            v_gloss: 3,
            v_text: 6,
            max_text_len: 6,
        },
        21,
    )?;
    println!(
        "model: {} tensors, {} scalars\n",
        model.num_tensors(),
        model.param_count()
    );

    let mut rng = Rng::seed_from(4);
    let frames = Mat::from_fn(4, 3, |_, _| rng.normal());
    let text = [2usize, 4];
    let prefix = [0, 2, 4]; // start marker + content tokens
    let mut text_targets = text.to_vec();
    text_targets.push(TEXT_EOS);
    let gloss = GlossTarget::new(vec![1, 2])?;
    let targets = SampleTargets {
        text: &text_targets,
        frame_labels: &[1, 1, 2, 2],
        frame_mask: &[true, true, true, true],
        gloss: Some(&gloss),
    };

    // Analytic gradients for the whole parameter set in one backward pass.
    let (mut fp, text_logits) = model.forward(&frames, &prefix)?;
    let sl = attach_sample_loss(
        &mut fp.tape,
        text_logits,
        fp.enc_gloss_logits,
        fp.bb_frame_logits,
        &targets,
        &LossWeights::defaults(),
        &BatchNormalizers {
            samples: 1.0,
            text_tokens: 3.0,
            labeled_frames: 4.0,
        },
    )?;
    let base = fp.tape.value(sl.root).scalar_value();
    let grads = fp.tape.backward(sl.root);
    println!("composite loss: {base:.6}");
    println!(
        "components: ctc {:.4}, ce(sum) {:.4}, enc(sum) {:.4}, bb(sum) {:.4}\n",
        sl.ctc, sl.ce_sum, sl.enc_sum, sl.bb_sum
    );

    // Central differences on one coordinate of each tensor.
    let h = 1e-5;
    println!("{:<22} {:>14} {:>14} {:>10}", "tensor", "analytic", "numeric", "rel err");
    for idx in 0..model.num_tensors() {
        let analytic = grads
            .get(fp.param_node(idx))
            .map_or(0.0, |g| g.as_slice()[0]);
        let mut plus = model.clone();
        plus.param_mut(idx).value.as_mut_slice()[0] += h;
        let mut minus = model.clone();
        minus.param_mut(idx).value.as_mut_slice()[0] -= h;
        let fd = (loss_value(&plus, &frames, &prefix, &targets)?
            - loss_value(&minus, &frames, &prefix, &targets)?)
            / (2.0 * h);
        let denom = analytic.abs().max(fd.abs()).max(1e-12);
        println!(
            "{:<22} {:>14.8} {:>14.8} {:>10.2e}",
            model.param(idx).name,
            analytic,
            fd,
            (analytic - fd).abs() / denom
        );
    }
    Ok(())
}
