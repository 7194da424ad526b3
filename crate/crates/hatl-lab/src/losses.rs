//! The weighted multi-objective training loss and its components.
//!
//! Total = w_ctc * L_CTC + w_ce * L_CE + w_enc * L_enc + w_bb * L_bb, with
//! the text CE normalized by the number of non-pad target tokens and the
//! frame-wise terms by the number of supervised frames. Sign-to-text mode
//! sets w_ctc = 0 and is guaranteed (and tested via the call-count probe)
//! never to evaluate the CTC forward pass.
//!
//! Two layers of API: plain value-level functions over padded batches, and
//! [`attach_sample_loss`], which appends the same math to a recorded
//! [`ForwardPass`](crate::model::ForwardPass) tape for training. Per-sample
//! graphs use batch-level normalizer coefficients, so their sum equals the
//! padded batch computation exactly.

use crate::ctc::{ctc_loss_and_grad, FrameLogProbs, GlossTarget};
use crate::error::{Error, Result};
use crate::mat::{log_sum_exp, Mat};
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub ctc: f64,
    pub ce: f64,
    pub enc: f64,
    pub bb: f64,
}

impl LossWeights {
    /// Primary objectives at full weight, auxiliary frame supervision at half.
    pub fn defaults() -> Self {
        LossWeights {
            ctc: 1.0,
            ce: 1.0,
            enc: 0.5,
            bb: 0.5,
        }
    }

    /// Sign-to-text: the gloss alignment objective is disabled entirely.
    pub fn for_sign2text(mut self) -> Self {
        self.ctc = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_ctc", self.ctc),
            ("w_ce", self.ce),
            ("w_enc", self.enc),
            ("w_bb", self.bb),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Unweighted component values, retained for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub ctc: f64,
    pub ce: f64,
    pub enc: f64,
    pub bb: f64,
}

/// Weighted total of already-computed components.
pub fn composite_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let values = [parts.ctc, parts.ce, parts.enc, parts.bb];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite loss component: {parts:?}"
        )));
    }
    Ok(w.ctc * parts.ctc + w.ce * parts.ce + w.enc * parts.enc + w.bb * parts.bb)
}

fn log_prob(logits_row: &[f64], class: usize) -> f64 {
    logits_row[class] - log_sum_exp(logits_row)
}

/// Teacher-forced text cross-entropy over a padded batch.
///
/// `logits[i]` has one row per target position of sample i; `valid[i]`
/// marks the non-pad positions. Both the sum and the normalizer cover only
/// valid positions.
pub fn cross_entropy_text(
    logits: &[Mat],
    targets: &[Vec<usize>],
    valid: &[Vec<bool>],
) -> Result<f64> {
    if logits.len() != targets.len() || logits.len() != valid.len() {
        return Err(Error::Argument("batch component counts differ".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((l, t), v) in logits.iter().zip(targets).zip(valid) {
        if l.rows() != t.len() || l.rows() != v.len() {
            return Err(Error::Argument(format!(
                "sample shape mismatch: {} logit rows, {} targets, {} mask entries",
                l.rows(),
                t.len(),
                v.len()
            )));
        }
        for s in 0..t.len() {
            if !v[s] {
                continue;
            }
            if t[s] >= l.cols() {
                return Err(Error::Argument(format!(
                    "target token {} out of vocabulary {}",
                    t[s],
                    l.cols()
                )));
            }
            sum -= log_prob(l.row(s), t[s]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Argument(
            "all-pad batch: no valid text positions".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Frame-wise cross-entropy over the supervised index set; serves both the
/// encoder and backbone auxiliary terms.
pub fn framewise_ce(logits: &[Mat], labels: &[Vec<usize>], mask: &[Vec<bool>]) -> Result<f64> {
    if logits.len() != labels.len() || logits.len() != mask.len() {
        return Err(Error::Argument("batch component counts differ".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((l, y), m) in logits.iter().zip(labels).zip(mask) {
        if l.rows() != y.len() || l.rows() != m.len() {
            return Err(Error::Argument(format!(
                "sample shape mismatch: {} logit rows, {} labels, {} mask entries",
                l.rows(),
                y.len(),
                m.len()
            )));
        }
        for g in 0..y.len() {
            if !m[g] {
                continue;
            }
            if y[g] >= l.cols() {
                return Err(Error::Argument(format!(
                    "frame label {} out of range {}",
                    y[g],
                    l.cols()
                )));
            }
            sum -= log_prob(l.row(g), y[g]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config(
            "frame supervision enabled but the supervised set is empty".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Per-sample training targets, borrowed from the dataset record.
#[derive(Debug, Clone, Copy)]
pub struct SampleTargets<'a> {
    /// Token the decoder must produce at each prefix position (ends with
    /// the end-of-text token).
    pub text: &'a [usize],
    /// Ground-truth gloss label per frame.
    pub frame_labels: &'a [usize],
    /// Supervised-frame mask, aligned with `frame_labels`.
    pub frame_mask: &'a [bool],
    /// Gloss sequence for the alignment loss; may be absent when w_ctc = 0.
    pub gloss: Option<&'a GlossTarget>,
}

/// Batch-level denominators shared by every per-sample graph in one step.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormalizers {
    pub samples: f64,
    pub text_tokens: f64,
    pub labeled_frames: f64,
}

/// What [`attach_sample_loss`] adds to the tape, plus raw sums for logging.
#[derive(Debug, Clone, Copy)]
pub struct SampleLoss {
    /// Scalar node: this sample's share of the weighted batch loss.
    pub root: NodeId,
    /// Unnormalized component sums and counts for exact epoch averaging.
    pub ctc: f64,
    pub ce_sum: f64,
    pub enc_sum: f64,
    pub bb_sum: f64,
    pub text_tokens: usize,
    pub labeled_frames: usize,
}

fn nll_sum_node(
    tape: &mut Tape,
    logits: NodeId,
    classes: impl Iterator<Item = (usize, usize)>,
) -> (NodeId, f64, usize) {
    let (rows, cols) = tape.value(logits).shape();
    let mut w = Mat::zeros(rows, cols);
    let mut count = 0usize;
    for (row, class) in classes {
        *w.at_mut(row, class) -= 1.0;
        count += 1;
    }
    let lp = tape.log_softmax_rows(logits);
    let node = tape.weighted_sum(lp, w);
    let value = tape.value(node).scalar_value();
    (node, value, count)
}

/// Appends this sample's loss subgraph to `tape` and returns the scalar
/// root. Coefficients fold in both the loss weights and the batch
/// normalizers, so summing roots over the batch reproduces the padded
/// batch-level composite loss exactly.
pub fn attach_sample_loss(
    tape: &mut Tape,
    text_logits: NodeId,
    enc_gloss_logits: NodeId,
    bb_frame_logits: NodeId,
    targets: &SampleTargets,
    weights: &LossWeights,
    norms: &BatchNormalizers,
) -> Result<SampleLoss> {
    weights.validate()?;
    let mut terms: Vec<(NodeId, f64)> = Vec::with_capacity(4);

    let require_norm = |name: &str, w: f64, norm: f64| -> Result<f64> {
        if w > 0.0 && norm <= 0.0 {
            return Err(Error::Config(format!(
                "{name} weighted {w} but its normalizer is {norm}"
            )));
        }
        Ok(if norm > 0.0 { 1.0 / norm } else { 0.0 })
    };

    // Alignment loss: analytic value and gradient attach as one node. The
    // forward pass is skipped entirely at zero weight.
    let mut ctc_value = 0.0;
    if weights.ctc > 0.0 {
        let inv = require_norm("ctc", weights.ctc, norms.samples)?;
        let gloss = targets.gloss.ok_or_else(|| {
            Error::Config("ctc weight is positive but the sample has no gloss target".into())
        })?;
        let lp = FrameLogProbs::from_logits(tape.value(enc_gloss_logits));
        let (loss, grad) = ctc_loss_and_grad(&lp, gloss)?;
        ctc_value = loss;
        let node = tape.custom_scalar(enc_gloss_logits, loss, grad);
        terms.push((node, weights.ctc * inv));
    }

    let (text_rows, _) = tape.value(text_logits).shape();
    if targets.text.len() != text_rows {
        return Err(Error::Argument(format!(
            "{} text targets for {} logit rows",
            targets.text.len(),
            text_rows
        )));
    }
    let (ce_node, ce_sum, text_tokens) = nll_sum_node(
        tape,
        text_logits,
        targets.text.iter().copied().enumerate(),
    );
    if weights.ce > 0.0 {
        let inv = require_norm("ce", weights.ce, norms.text_tokens)?;
        terms.push((ce_node, weights.ce * inv));
    }

    let g = tape.value(enc_gloss_logits).shape().0;
    if targets.frame_labels.len() != g || targets.frame_mask.len() != g {
        return Err(Error::Argument(format!(
            "frame supervision length mismatch: {} frames, {} labels, {} mask",
            g,
            targets.frame_labels.len(),
            targets.frame_mask.len()
        )));
    }
    let supervised = || {
        targets
            .frame_labels
            .iter()
            .copied()
            .enumerate()
            .filter(|(i, _)| targets.frame_mask[*i])
    };
    let (enc_node, enc_sum, labeled_frames) = nll_sum_node(tape, enc_gloss_logits, supervised());
    let (bb_node, bb_sum, _) = nll_sum_node(tape, bb_frame_logits, supervised());
    if weights.enc > 0.0 {
        let inv = require_norm("enc", weights.enc, norms.labeled_frames)?;
        terms.push((enc_node, weights.enc * inv));
    }
    if weights.bb > 0.0 {
        let inv = require_norm("bb", weights.bb, norms.labeled_frames)?;
        terms.push((bb_node, weights.bb * inv));
    }

    let root = tape.affine_combine(&terms);
    if !tape.value(root).scalar_value().is_finite() {
        return Err(Error::Numeric("non-finite sample loss".into()));
    }
    Ok(SampleLoss {
        root,
        ctc: ctc_value,
        ce_sum,
        enc_sum,
        bb_sum,
        text_tokens,
        labeled_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc;
    use crate::model::{Model, ModelConfig};
    use crate::rng::Rng;

    #[test]
    fn near_one_hot_text_ce_approaches_zero() {
        let mut logits = Mat::zeros(2, 4);
        *logits.at_mut(0, 1) = 50.0;
        *logits.at_mut(1, 3) = 50.0;
        let loss = cross_entropy_text(
            &[logits],
            &[vec![1, 3]],
            &[vec![true, true]],
        )
        .unwrap();
        assert!(loss < 1e-9, "loss {loss}");
    }

    #[test]
    fn uniform_text_ce_is_log_vocab() {
        let loss = cross_entropy_text(
            &[Mat::zeros(2, 4)],
            &[vec![0, 2]],
            &[vec![true, true]],
        )
        .unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pads_change_nothing() {
        let mut rng = Rng::seed_from(1);
        let core = Mat::randn(3, 5, 1.0, &mut rng);
        let base = cross_entropy_text(
            &[core.clone()],
            &[vec![1, 4, 2]],
            &[vec![true, true, true]],
        )
        .unwrap();
        // Same batch with two pad rows appended.
        let mut padded = Mat::zeros(5, 5);
        for i in 0..3 {
            padded.row_mut(i).copy_from_slice(core.row(i));
        }
        let with_pads = cross_entropy_text(
            &[padded],
            &[vec![1, 4, 2, 0, 0]],
            &[vec![true, true, true, false, false]],
        )
        .unwrap();
        assert_eq!(base, with_pads);
    }

    #[test]
    fn all_pad_batch_is_an_argument_error() {
        let r = cross_entropy_text(&[Mat::zeros(2, 4)], &[vec![0, 0]], &[vec![false, false]]);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn uniform_framewise_ce_is_log_vocab() {
        let loss = framewise_ce(
            &[Mat::zeros(3, 5)],
            &[vec![1, 2, 3]],
            &[vec![true, true, true]],
        )
        .unwrap();
        assert!((loss - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn framewise_mean_unchanged_by_halving_identical_terms() {
        // Every supervised frame has the same distribution and label, so
        // any non-empty subset yields the same mean.
        let mut logits = Mat::zeros(4, 3);
        for i in 0..4 {
            *logits.at_mut(i, 2) = 1.3;
        }
        let full = framewise_ce(
            &[logits.clone()],
            &[vec![2; 4]],
            &[vec![true, true, true, true]],
        )
        .unwrap();
        let half = framewise_ce(
            &[logits],
            &[vec![2; 4]],
            &[vec![true, false, true, false]],
        )
        .unwrap();
        assert!((full - half).abs() < 1e-15);
    }

    #[test]
    fn empty_supervision_is_a_configuration_error() {
        let r = framewise_ce(&[Mat::zeros(2, 3)], &[vec![1, 1]], &[vec![false, false]]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn composite_examples() {
        let parts = LossParts {
            ctc: 2.0,
            ce: 3.0,
            enc: 5.0,
            bb: 7.0,
        };
        // Sign-to-text degenerate: only CE contributes.
        let w = LossWeights {
            ctc: 0.0,
            ce: 1.0,
            enc: 0.0,
            bb: 0.0,
        };
        assert_eq!(composite_loss(&parts, &w).unwrap(), 3.0);

        let ones = LossParts {
            ctc: 1.0,
            ce: 1.0,
            enc: 1.0,
            bb: 1.0,
        };
        let all = LossWeights {
            ctc: 1.0,
            ce: 1.0,
            enc: 1.0,
            bb: 1.0,
        };
        assert_eq!(composite_loss(&ones, &all).unwrap(), 4.0);

        let w = LossWeights {
            ctc: 0.3,
            ce: 0.7,
            enc: 0.1,
            bb: 0.9,
        };
        let doubled = LossWeights {
            ctc: 0.6,
            ce: 1.4,
            enc: 0.2,
            bb: 1.8,
        };
        let base = composite_loss(&parts, &w).unwrap();
        assert!((composite_loss(&parts, &doubled).unwrap() - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn negative_weight_rejected_and_monotonicity_holds() {
        let parts = LossParts {
            ctc: 1.0,
            ce: 1.0,
            enc: 1.0,
            bb: 1.0,
        };
        let mut w = LossWeights::defaults();
        w.enc = -0.1;
        assert!(matches!(composite_loss(&parts, &w), Err(Error::Config(_))));

        let w = LossWeights::defaults();
        let base = composite_loss(&parts, &w).unwrap();
        for bump in [
            LossParts { ctc: 1.5, ..parts },
            LossParts { ce: 1.5, ..parts },
            LossParts { enc: 1.5, ..parts },
            LossParts { bb: 1.5, ..parts },
        ] {
            assert!(composite_loss(&bump, &w).unwrap() >= base);
        }
    }

    #[test]
    fn sign2text_weights_disable_ctc() {
        let w = LossWeights::defaults().for_sign2text();
        assert_eq!(w.ctc, 0.0);
        assert_eq!(w.ce, 1.0);
    }

    fn tiny_model() -> (Model, ModelConfig) {
        let cfg = ModelConfig {
            d_in: 3,
            d_model: 4,
            n_backbone: 2,
            n_encoder: 1,
            n_decoder: 1,
            v_gloss: 2,
            v_text: 6,
            max_text_len: 8,
        };
        (Model::build(cfg.clone(), 42).unwrap(), cfg)
    }

    struct TinyBatch {
        frames: Vec<Mat>,
        prefixes: Vec<Vec<usize>>,
        texts: Vec<Vec<usize>>,
        frame_labels: Vec<Vec<usize>>,
        glosses: Vec<GlossTarget>,
    }

    fn tiny_batch(cfg: &ModelConfig, seed: u64) -> TinyBatch {
        let mut rng = Rng::seed_from(seed);
        let mut frames = Vec::new();
        let mut prefixes = Vec::new();
        let mut texts = Vec::new();
        let mut frame_labels = Vec::new();
        let mut glosses = Vec::new();
        for _ in 0..3 {
            let g = rng.range_inclusive(4, 6);
            frames.push(Mat::randn(g, cfg.d_in, 0.8, &mut rng));
            let s = rng.range_inclusive(2, 4);
            let mut text = vec![1usize]; // start token
            for _ in 0..s {
                text.push(rng.range_inclusive(3, cfg.v_text - 1));
            }
            prefixes.push(text.clone());
            let mut target: Vec<usize> = text[1..].to_vec();
            target.push(2); // end token
            texts.push(target);
            frame_labels.push((0..g).map(|_| rng.range_inclusive(1, cfg.v_gloss)).collect());
            // Feasible gloss: short, no adjacent repeats.
            let mut y = vec![rng.range_inclusive(1, cfg.v_gloss)];
            if g >= 2 {
                let mut next = rng.range_inclusive(1, cfg.v_gloss);
                while next == y[0] {
                    next = rng.range_inclusive(1, cfg.v_gloss);
                }
                y.push(next);
            }
            glosses.push(GlossTarget::new(y).unwrap());
        }
        TinyBatch {
            frames,
            prefixes,
            texts,
            frame_labels,
            glosses,
        }
    }

    /// Full composite batch loss as a plain number, for finite differences.
    fn batch_loss(model: &Model, batch: &TinyBatch, w: &LossWeights) -> f64 {
        let norms = BatchNormalizers {
            samples: batch.frames.len() as f64,
            text_tokens: batch.texts.iter().map(Vec::len).sum::<usize>() as f64,
            labeled_frames: batch.frames.iter().map(Mat::rows).sum::<usize>() as f64,
        };
        let mut total = 0.0;
        for i in 0..batch.frames.len() {
            let (mut fp, text_logits) =
                model.forward(&batch.frames[i], &batch.prefixes[i]).unwrap();
            let mask = vec![true; batch.frames[i].rows()];
            let targets = SampleTargets {
                text: &batch.texts[i],
                frame_labels: &batch.frame_labels[i],
                frame_mask: &mask,
                gloss: Some(&batch.glosses[i]),
            };
            let sl = attach_sample_loss(
                &mut fp.tape,
                text_logits,
                fp.enc_gloss_logits,
                fp.bb_frame_logits,
                &targets,
                w,
                &norms,
            )
            .unwrap();
            total += fp.tape.value(sl.root).scalar_value();
        }
        total
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let (model, cfg) = tiny_model();
        assert!(model.param_count() <= 2000, "suite wants a tiny model");
        let batch = tiny_batch(&cfg, 7);
        let w = LossWeights::defaults();

        // Analytic: accumulate parameter gradients over the batch.
        let norms = BatchNormalizers {
            samples: batch.frames.len() as f64,
            text_tokens: batch.texts.iter().map(Vec::len).sum::<usize>() as f64,
            labeled_frames: batch.frames.iter().map(Mat::rows).sum::<usize>() as f64,
        };
        let mut acc: Vec<Mat> = model
            .params()
            .iter()
            .map(|p| Mat::zeros(p.value.shape().0, p.value.shape().1))
            .collect();
        for i in 0..batch.frames.len() {
            let (mut fp, text_logits) =
                model.forward(&batch.frames[i], &batch.prefixes[i]).unwrap();
            let mask = vec![true; batch.frames[i].rows()];
            let targets = SampleTargets {
                text: &batch.texts[i],
                frame_labels: &batch.frame_labels[i],
                frame_mask: &mask,
                gloss: Some(&batch.glosses[i]),
            };
            let sl = attach_sample_loss(
                &mut fp.tape,
                text_logits,
                fp.enc_gloss_logits,
                fp.bb_frame_logits,
                &targets,
                &w,
                &norms,
            )
            .unwrap();
            let grads = fp.tape.backward(sl.root);
            for (idx, a) in acc.iter_mut().enumerate() {
                if let Some(g) = grads.get(fp.param_node(idx)) {
                    a.add_assign(g);
                }
            }
        }

        // Finite differences over a deterministic spread of coordinates.
        let h = 1e-5;
        let mut coords: Vec<(usize, usize)> = Vec::new();
        let mut rng = Rng::seed_from(99);
        for idx in 0..model.num_tensors() {
            let len = model.param(idx).value.len();
            for _ in 0..3.min(len) {
                coords.push((idx, rng.below(len)));
            }
        }
        assert!(coords.len() >= 60);
        for (idx, k) in coords {
            let mut mp = model.clone();
            mp.param_mut(idx).value.as_mut_slice()[k] += h;
            let fp_val = batch_loss(&mp, &batch, &w);
            let mut mm = model.clone();
            mm.param_mut(idx).value.as_mut_slice()[k] -= h;
            let fm_val = batch_loss(&mm, &batch, &w);
            let fd = (fp_val - fm_val) / (2.0 * h);
            let a = acc[idx].as_slice()[k];
            let denom = a.abs().max(fd.abs());
            let ok = if denom < 1e-8 {
                (a - fd).abs() < 1e-8
            } else {
                (a - fd).abs() / denom < 1e-5
            };
            assert!(
                ok,
                "{} coord {k}: analytic {a} vs fd {fd}",
                model.param(idx).name
            );
        }
    }

    #[test]
    fn sign2text_never_evaluates_ctc_forward() {
        let (model, cfg) = tiny_model();
        let batch = tiny_batch(&cfg, 13);
        let w = LossWeights::defaults().for_sign2text();
        let before = ctc::forward_calls();
        let total = batch_loss(&model, &batch, &w);
        assert!(total.is_finite());
        assert_eq!(
            ctc::forward_calls(),
            before,
            "sign-to-text batch must not touch the CTC forward pass"
        );
    }

    #[test]
    fn per_sample_graphs_match_value_level_batch_functions() {
        // The tape path (sum of per-sample roots) must reproduce the plain
        // batched functions including their normalizers.
        let (model, cfg) = tiny_model();
        let batch = tiny_batch(&cfg, 21);
        let w = LossWeights::defaults();
        let tape_total = batch_loss(&model, &batch, &w);

        let mut text_logit_mats = Vec::new();
        let mut gloss_logit_mats = Vec::new();
        let mut bb_logit_mats = Vec::new();
        let mut ctc_sum = 0.0;
        for i in 0..batch.frames.len() {
            let (fp, text_logits) =
                model.forward(&batch.frames[i], &batch.prefixes[i]).unwrap();
            text_logit_mats.push(fp.tape.value(text_logits).clone());
            gloss_logit_mats.push(fp.tape.value(fp.enc_gloss_logits).clone());
            bb_logit_mats.push(fp.tape.value(fp.bb_frame_logits).clone());
            let lp = FrameLogProbs::from_logits(fp.tape.value(fp.enc_gloss_logits));
            ctc_sum += ctc::ctc_loss(&lp, &batch.glosses[i]).unwrap();
        }
        let all_true: Vec<Vec<bool>> = batch
            .frames
            .iter()
            .map(|f| vec![true; f.rows()])
            .collect();
        let text_valid: Vec<Vec<bool>> =
            batch.texts.iter().map(|t| vec![true; t.len()]).collect();
        let parts = LossParts {
            ctc: ctc_sum / batch.frames.len() as f64,
            ce: cross_entropy_text(&text_logit_mats, &batch.texts, &text_valid).unwrap(),
            enc: framewise_ce(&gloss_logit_mats, &batch.frame_labels, &all_true).unwrap(),
            bb: framewise_ce(&bb_logit_mats, &batch.frame_labels, &all_true).unwrap(),
        };
        let value_total = composite_loss(&parts, &w).unwrap();
        assert!(
            (tape_total - value_total).abs() < 1e-10,
            "{tape_total} vs {value_total}"
        );
    }
}
