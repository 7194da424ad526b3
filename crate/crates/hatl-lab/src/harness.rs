//! End-to-end orchestration: backbone pretraining on the source domain,
//! fine-tuning under the three regimes, evaluation, and the artifact files
//! every run leaves behind (`metrics.csv`, `events.tsv`, `best.ckpt`,
//! `report.json`, `hyp.txt`/`ref.txt`).
//!
//! Everything here is single-threaded and deterministic: a (config, seed,
//! data) triple reproduces `metrics.csv` and `events.tsv` byte for byte.
//! Wall-clock timings appear only in `report.json`, which is exempt from
//! that guarantee.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{Regime, RunConfig, Task};
use crate::controller::{apply_pending, Controller, Event, EpochDecision};
use crate::ctc::{ctc_loss, FrameLogProbs, GlossTarget};
use crate::data::{epoch_batches, load_dataset, save_dataset, Dataset, DatasetSpec, SampleRecord, TEXT_BOS, TEXT_EOS};
use crate::decode::{beam_search, greedy_decode, BeamConfig};
use crate::error::{Error, Result};
use crate::losses::{attach_sample_loss, composite_loss, BatchNormalizers, LossParts, SampleTargets};
use crate::mat::Mat;
use crate::metrics::{evaluate_corpus, EvalSummary};
use crate::model::{Model, ModelConfig, ParamSnapshot, TrainableSet};
use crate::ngram::{train_ngram_lm, NGramLM};
use crate::optim::{AdamW, OptimConfig, WarmupSchedule};

/// Batch-shuffle salt so pretraining and fine-tuning see different orders
/// from the same run seed.
const PRETRAIN_SHUFFLE_SALT: u64 = 0x7072_6574_7261_696E;

/// The four dataset splits, in memory.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub pretrain: Vec<SampleRecord>,
    pub train: Vec<SampleRecord>,
    pub dev: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

impl LoadedData {
    pub fn from_dataset(ds: &Dataset) -> LoadedData {
        LoadedData {
            pretrain: ds.pretrain.clone(),
            train: ds.train.clone(),
            dev: ds.dev.clone(),
            test: ds.test.clone(),
        }
    }

    /// Reads the four `<split>.tsv` files a `gen-data` run wrote.
    pub fn from_dir(dir: &Path) -> Result<LoadedData> {
        Ok(LoadedData {
            pretrain: load_dataset(&dir.join("pretrain.tsv"))?,
            train: load_dataset(&dir.join("train.tsv"))?,
            dev: load_dataset(&dir.join("dev.tsv"))?,
            test: load_dataset(&dir.join("test.tsv"))?,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[SampleRecord]> {
        match name {
            "pretrain" => Ok(&self.pretrain),
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Argument(format!(
                "unknown split {other} (expected pretrain|train|dev|test)"
            ))),
        }
    }

    fn all_samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.pretrain
            .iter()
            .chain(&self.train)
            .chain(&self.dev)
            .chain(&self.test)
    }
}

/// Writes the split files plus the `spec.echo` provenance file.
pub fn write_data_dir(dir: &Path, ds: &Dataset, spec: &DatasetSpec) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    save_dataset(&dir.join("pretrain.tsv"), &ds.pretrain)?;
    save_dataset(&dir.join("train.tsv"), &ds.train)?;
    save_dataset(&dir.join("dev.tsv"), &ds.dev)?;
    save_dataset(&dir.join("test.tsv"), &ds.test)?;
    write_text(&dir.join("spec.echo"), &spec.echo())
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Model dimensions are inferred from the data (feature width, vocabulary
/// extents, longest text) and the configured layer counts.
pub fn model_config_from_data(cfg: &RunConfig, data: &LoadedData) -> Result<ModelConfig> {
    let mut samples = data.all_samples();
    let first = samples
        .next()
        .ok_or_else(|| Error::Config("dataset has no samples".into()))?;
    let d_in = first.frames.cols();
    let mut v_gloss = 0usize;
    let mut max_text_id = TEXT_EOS;
    let mut max_text_len = 0usize;
    for s in data.all_samples() {
        if s.frames.cols() != d_in {
            return Err(Error::Config(format!(
                "sample {} has feature width {}, expected {d_in}",
                s.id,
                s.frames.cols()
            )));
        }
        v_gloss = v_gloss.max(s.gloss.iter().copied().max().unwrap_or(0));
        max_text_id = max_text_id.max(s.text.iter().copied().max().unwrap_or(0));
        max_text_len = max_text_len.max(s.text.len());
    }
    Ok(ModelConfig {
        d_in,
        d_model: cfg.d_model,
        n_backbone: cfg.n_backbone,
        n_encoder: cfg.n_encoder,
        n_decoder: cfg.n_decoder,
        v_gloss,
        v_text: max_text_id + 1,
        // Teacher forcing feeds [start] + text, so positions must cover
        // the longest text plus one.
        max_text_len: max_text_len + 1,
    })
}

fn decode_limit(cfg: &RunConfig, model: &Model) -> usize {
    if cfg.max_decode_len > 0 {
        cfg.max_decode_len
    } else {
        model.cfg().max_text_len - 1
    }
}

/// The language model used for fused decoding: an n-gram model over the
/// training split's text side.
pub fn train_text_lm(cfg: &RunConfig, train: &[SampleRecord], v_text: usize) -> Result<NGramLM> {
    let corpus: Vec<Vec<usize>> = train.iter().map(|s| s.text.clone()).collect();
    train_ngram_lm(&corpus, cfg.lm_order, v_text)
}

// ---------------------------------------------------------------------------
// Gradient accumulation shared by pretraining and fine-tuning.
// ---------------------------------------------------------------------------

struct GradAccum {
    grads: Vec<Option<Mat>>,
}

impl GradAccum {
    fn new(model: &Model) -> GradAccum {
        GradAccum {
            grads: (0..model.num_tensors()).map(|_| None).collect(),
        }
    }

    fn add_from(&mut self, fp: &crate::model::ForwardPass, root: crate::tape::NodeId) {
        let g = fp.tape.backward(root);
        for (idx, slot) in self.grads.iter_mut().enumerate() {
            if let Some(dg) = g.get(fp.param_node(idx)) {
                match slot {
                    Some(acc) => acc.add_assign(dg),
                    None => *slot = Some(dg.clone()),
                }
            }
        }
    }

    /// Frozen tensors keep `None`; active tensors that happened to receive
    /// no gradient (possible only in degenerate graphs) get zeros so the
    /// optimizer's completeness check stays meaningful.
    fn into_step_grads(mut self, model: &Model, active: &TrainableSet) -> Vec<Option<Mat>> {
        for idx in 0..model.num_tensors() {
            let p = model.param(idx);
            if active.contains(p.group) && self.grads[idx].is_none() {
                let (r, c) = p.value.shape();
                self.grads[idx] = Some(Mat::zeros(r, c));
            }
        }
        self.grads
    }
}

// ---------------------------------------------------------------------------
// Backbone pretraining (source domain).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct PretrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
}

/// Fraction of frames whose backbone frame-classifier argmax matches the
/// ground-truth gloss label.
pub fn frame_accuracy(model: &Model, samples: &[SampleRecord]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in samples {
        let fp = model.encode(&s.frames)?;
        let logits = fp.tape.value(fp.bb_frame_logits);
        for (t, &label) in s.frame_labels.iter().enumerate() {
            let row = logits.row(t);
            let mut arg = 0usize;
            for (v, &x) in row.iter().enumerate() {
                if x > row[arg] {
                    arg = v;
                }
            }
            correct += usize::from(arg == label);
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Trains backbone + frame classifier on the un-shifted pretrain split
/// until held-out frame accuracy plateaus, then restores the best epoch.
/// When `save_to` is given, writes a backbone-only checkpoint.
pub fn pretrain_backbone(
    cfg: &RunConfig,
    data: &LoadedData,
    save_to: Option<&Path>,
) -> Result<(Model, PretrainReport)> {
    if data.pretrain.is_empty() {
        return Err(Error::Config("pretrain split is empty".into()));
    }
    let mc = model_config_from_data(cfg, data)?;
    let mut model = Model::build(mc, cfg.seed)?;
    // The backbone-only set never installs on the model (fine-tuning sets
    // must include the head); the optimizer scopes the updates instead.
    let pretrain_set = TrainableSet::backbone_pretrain(cfg.n_backbone);
    let opt_cfg = OptimConfig {
        lr_backbone_top: cfg.pretrain_lr,
        llrd_alpha: 1.0, // uniform rate: there is no head to decay away from
        ..cfg.optim.clone()
    };
    let mut opt = AdamW::build(&model, &pretrain_set, opt_cfg)?;

    // Hold out the tail fifth of the split for plateau monitoring.
    let held = (data.pretrain.len() / 5).max(1).min(data.pretrain.len() - 1);
    let (fit, dev) = data.pretrain.split_at(data.pretrain.len() - held);

    let mut best: Option<ParamSnapshot> = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut flat = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 1..=cfg.pretrain_epochs {
        epochs_run = epoch;
        for batch in epoch_batches(
            fit.len(),
            cfg.batch_size,
            cfg.seed ^ PRETRAIN_SHUFFLE_SALT,
            epoch,
        )? {
            let frames_in_batch: usize = batch.iter().map(|&i| fit[i].frames.rows()).sum();
            let mut acc = GradAccum::new(&model);
            for &i in &batch {
                let s = &fit[i];
                let mut fp = model.encode(&s.frames)?;
                let lp = fp.tape.log_softmax_rows(fp.bb_frame_logits);
                let (rows, cols) = fp.tape.value(lp).shape();
                let mut w = Mat::zeros(rows, cols);
                for (t, &label) in s.frame_labels.iter().enumerate() {
                    *w.at_mut(t, label) -= 1.0 / frames_in_batch as f64;
                }
                let root = fp.tape.weighted_sum(lp, w);
                if !fp.tape.value(root).scalar_value().is_finite() {
                    return Err(Error::Numeric(format!(
                        "pretraining diverged at epoch {epoch} (non-finite loss)"
                    )));
                }
                acc.add_from(&fp, root);
            }
            let grads = acc.into_step_grads(&model, &pretrain_set);
            opt.step(&mut model, &grads, 1.0)?;
        }
        let acc = frame_accuracy(&model, dev)?;
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best = Some(model.snapshot(epoch, acc));
            flat = 0;
        } else {
            flat += 1;
            if flat >= cfg.pretrain_patience {
                break;
            }
        }
    }
    if let Some(snap) = &best {
        model.restore(snap)?;
    }
    if let Some(path) = save_to {
        let mut ck = Checkpoint::new();
        checkpoint::put_backbone(&mut ck, &model);
        ck.push_str("meta/kind", "backbone-pretrain");
        ck.write(path)?;
    }
    Ok((
        model,
        PretrainReport {
            epochs_run,
            best_epoch,
            best_dev_accuracy: best_acc,
        },
    ))
}

// ---------------------------------------------------------------------------
// Fine-tuning.
// ---------------------------------------------------------------------------

/// Per-epoch log entry; the wall-clock field is informational only.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ctc: f64,
    pub loss_ce: f64,
    pub loss_enc: f64,
    pub loss_bb: f64,
    pub dev_bleu4: f64,
    pub dev_rouge_l: f64,
    /// Mean dev CTC loss; absent for the text-only task.
    pub dev_ctc: Option<f64>,
    pub unfrozen_layers: usize,
    pub wall_clock_s: f64,
}

/// The five numbers reported per split.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricBlock {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
}

impl MetricBlock {
    pub fn from_summary(s: &EvalSummary) -> MetricBlock {
        MetricBlock {
            bleu1: s.bleu_n(1),
            bleu2: s.bleu_n(2),
            bleu3: s.bleu_n(3),
            bleu4: s.bleu_n(4),
            rouge_l: s.rouge_l,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunReport {
    pub regime: String,
    pub task: String,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    /// Controller timeline in `epoch<TAB>event<TAB>detail` form.
    pub events: Vec<String>,
    pub best_epoch: usize,
    pub best_dev_bleu4: f64,
    /// Final beam+LM numbers for the best checkpoint.
    pub final_dev: MetricBlock,
    pub final_test: MetricBlock,
    pub total_wall_clock_s: f64,
}

pub struct RunOptions<'a> {
    pub regime: Regime,
    pub task: Task,
    /// Backbone checkpoint to start from; `None` pretrains in place and
    /// saves `pretrain.ckpt` next to the other artifacts.
    pub pretrained: Option<&'a Path>,
    pub out_dir: &'a Path,
}

/// Mean dev CTC loss under the current model.
fn dev_ctc_loss(model: &Model, dev: &[SampleRecord]) -> Result<f64> {
    let mut sum = 0.0;
    for s in dev {
        let fp = model.encode(&s.frames)?;
        let lp = FrameLogProbs::from_logits(fp.tape.value(fp.enc_gloss_logits));
        let target = GlossTarget::new(s.gloss.clone())?;
        sum += ctc_loss(&lp, &target)?;
    }
    Ok(sum / dev.len() as f64)
}

fn greedy_dev_eval(model: &Model, dev: &[SampleRecord], max_len: usize) -> Result<EvalSummary> {
    let mut hyps = Vec::with_capacity(dev.len());
    let mut refs = Vec::with_capacity(dev.len());
    for s in dev {
        hyps.push(greedy_decode(model, &s.frames, max_len)?);
        refs.push(s.text.clone());
    }
    evaluate_corpus(&hyps, &refs)
}

/// Shortest-round-trip float rendering: deterministic and parseable.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Fine-tunes under one regime and writes the run artifacts. See
/// [`run_training_observed`] for the observer variant.
pub fn run_training(cfg: &RunConfig, data: &LoadedData, opts: &RunOptions) -> Result<RunReport> {
    run_training_observed(cfg, data, opts, &mut |_, _| {})
}

/// As [`run_training`], additionally calling `observer(epoch, &model)`
/// after the backbone is loaded (epoch 0) and at the end of every epoch —
/// the hook the freeze-semantics tests use to watch parameters evolve.
pub fn run_training_observed(
    cfg: &RunConfig,
    data: &LoadedData,
    opts: &RunOptions,
    observer: &mut dyn FnMut(usize, &Model),
) -> Result<RunReport> {
    let run_start = Instant::now();
    cfg.validate()?;
    if data.train.is_empty() || data.dev.is_empty() || data.test.is_empty() {
        return Err(Error::Config("train/dev/test splits must be non-empty".into()));
    }
    std::fs::create_dir_all(opts.out_dir)
        .map_err(|e| Error::io(format!("creating {}", opts.out_dir.display()), e))?;

    let mc = model_config_from_data(cfg, data)?;
    let mut model = Model::build(mc, cfg.seed)?;

    // Start from a pretrained backbone: given, or produced on the spot.
    match opts.pretrained {
        Some(path) => {
            let ck = Checkpoint::read(path)?;
            checkpoint::load_backbone_into(&ck, &mut model)?;
        }
        None => {
            let (pre, _) =
                pretrain_backbone(cfg, data, Some(&opts.out_dir.join("pretrain.ckpt")))?;
            let mut ck = Checkpoint::new();
            checkpoint::put_backbone(&mut ck, &pre);
            checkpoint::load_backbone_into(&ck, &mut model)?;
        }
    }

    let weights = cfg.loss_weights_for(opts.task);
    model.set_trainable(match opts.regime {
        Regime::Classical | Regime::Hatl => TrainableSet::head_only(cfg.n_backbone),
        Regime::Full => TrainableSet::full(cfg.n_backbone),
    })?;
    let mut controller = match opts.regime {
        Regime::Hatl => Some(Controller::new(
            cfg.controller_config(opts.task, cfg.n_backbone),
        )?),
        _ => None,
    };
    let mut opt = AdamW::build(&model, model.trainable(), cfg.optim.clone())?;

    let steps_per_epoch = data.train.len().div_ceil(cfg.batch_size);
    let schedule = WarmupSchedule::new(cfg.max_epochs * steps_per_epoch);
    let mut global_step = 0usize;

    let max_len = decode_limit(cfg, &model);
    let mut best: Option<ParamSnapshot> = None;
    let mut best_bleu4 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs: Vec<EpochLog> = Vec::new();

    observer(0, &model);
    for epoch in 1..=cfg.max_epochs {
        let epoch_start = Instant::now();
        // A release scheduled at the end of the previous epoch applies
        // now: restore best weights, grow the trainable set, rebuild.
        if let Some(ctrl) = controller.as_mut() {
            if ctrl.pending_release().is_some() {
                opt = apply_pending(ctrl, &mut model, |m, u| {
                    AdamW::build(m, u, cfg.optim.clone())
                })?;
            }
        }

        let mut sums = LossParts {
            ctc: 0.0,
            ce: 0.0,
            enc: 0.0,
            bb: 0.0,
        };
        let mut n_samples = 0usize;
        let mut n_text_tokens = 0usize;
        let mut n_frames = 0usize;
        for batch in epoch_batches(data.train.len(), cfg.batch_size, cfg.seed, epoch)? {
            let norms = BatchNormalizers {
                samples: batch.len() as f64,
                text_tokens: batch
                    .iter()
                    .map(|&i| data.train[i].text.len() + 1)
                    .sum::<usize>() as f64,
                labeled_frames: batch
                    .iter()
                    .map(|&i| data.train[i].frames.rows())
                    .sum::<usize>() as f64,
            };
            let mut acc = GradAccum::new(&model);
            for &i in &batch {
                let s = &data.train[i];
                let mut prefix = Vec::with_capacity(s.text.len() + 1);
                prefix.push(TEXT_BOS);
                prefix.extend_from_slice(&s.text);
                let mut target = s.text.clone();
                target.push(TEXT_EOS);
                let (mut fp, text_logits) = model.forward(&s.frames, &prefix)?;
                let mask = vec![true; s.frames.rows()];
                let gloss_target;
                let gloss = if weights.ctc > 0.0 {
                    gloss_target = GlossTarget::new(s.gloss.clone())?;
                    Some(&gloss_target)
                } else {
                    None
                };
                let targets = SampleTargets {
                    text: &target,
                    frame_labels: &s.frame_labels,
                    frame_mask: &mask,
                    gloss,
                };
                let sl = attach_sample_loss(
                    &mut fp.tape,
                    text_logits,
                    fp.enc_gloss_logits,
                    fp.bb_frame_logits,
                    &targets,
                    &weights,
                    &norms,
                )?;
                acc.add_from(&fp, sl.root);
                sums.ctc += sl.ctc;
                sums.ce += sl.ce_sum;
                sums.enc += sl.enc_sum;
                sums.bb += sl.bb_sum;
                n_text_tokens += sl.text_tokens;
                n_frames += sl.labeled_frames;
            }
            n_samples += batch.len();
            let grads = acc.into_step_grads(&model, model.trainable());
            global_step += 1;
            opt.step(&mut model, &grads, schedule.multiplier(global_step))?;
        }
        let parts = LossParts {
            ctc: sums.ctc / n_samples as f64,
            ce: sums.ce / n_text_tokens as f64,
            enc: sums.enc / n_frames as f64,
            bb: sums.bb / n_frames as f64,
        };
        let loss_total = composite_loss(&parts, &weights)?;

        let dev = greedy_dev_eval(&model, &data.dev, max_len)?;
        let dev_bleu4 = dev.bleu_n(4);
        let dev_ctc = match opts.task {
            Task::S2g2t => Some(dev_ctc_loss(&model, &data.dev)?),
            Task::S2t => None,
        };
        epochs.push(EpochLog {
            epoch,
            loss_total,
            loss_ctc: parts.ctc,
            loss_ce: parts.ce,
            loss_enc: parts.enc,
            loss_bb: parts.bb,
            dev_bleu4,
            dev_rouge_l: dev.rouge_l,
            dev_ctc,
            unfrozen_layers: model.trainable().released_layers(),
            wall_clock_s: epoch_start.elapsed().as_secs_f64(),
        });
        observer(epoch, &model);

        if dev_bleu4 > best_bleu4 {
            best_bleu4 = dev_bleu4;
            best_epoch = epoch;
            best = Some(model.snapshot(epoch, dev_bleu4));
        }

        if let Some(ctrl) = controller.as_mut() {
            let mut observed = BTreeMap::new();
            observed.insert("dev_bleu4".to_string(), dev_bleu4);
            if let Some(v) = dev_ctc {
                observed.insert("dev_ctc".to_string(), v);
            }
            let decision = ctrl.observe_epoch(&observed)?;
            if ctrl.primary_improved() {
                ctrl.store_best_snapshot(model.snapshot(epoch, dev_bleu4));
            }
            if decision == EpochDecision::Stop {
                break;
            }
        }
    }

    // Epoch log and timeline files (byte-identical across equal runs).
    let mut csv = String::from(
        "epoch,loss_total,loss_ctc,loss_ce,loss_enc,loss_bb,dev_bleu4,dev_rouge_l,dev_ctc,unfrozen_layers\n",
    );
    for e in &epochs {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            e.epoch,
            fmt_f64(e.loss_total),
            fmt_f64(e.loss_ctc),
            fmt_f64(e.loss_ce),
            fmt_f64(e.loss_enc),
            fmt_f64(e.loss_bb),
            fmt_f64(e.dev_bleu4),
            fmt_f64(e.dev_rouge_l),
            e.dev_ctc.map(fmt_f64).unwrap_or_else(|| "na".into()),
            e.unfrozen_layers,
        );
    }
    write_text(&opts.out_dir.join("metrics.csv"), &csv)?;
    let events: Vec<Event> = controller
        .as_ref()
        .map(|c| c.events().to_vec())
        .unwrap_or_default();
    let mut events_tsv = String::new();
    for ev in &events {
        let _ = writeln!(events_tsv, "{}", ev.tsv_line());
    }
    write_text(&opts.out_dir.join("events.tsv"), &events_tsv)?;

    // Best checkpoint and the final beam+LM evaluation it supports.
    let best_snap = best.ok_or_else(|| Error::Internal("no epoch was evaluated".into()))?;
    model.restore(&best_snap)?;
    let mut ck = Checkpoint::new();
    checkpoint::put_model(&mut ck, &model);
    ck.push_str("meta/kind", "fine-tuned");
    ck.push_str("meta/task", opts.task.as_str());
    ck.push_str("meta/regime", opts.regime.as_str());
    ck.push_u64("run/seed", vec![cfg.seed]);
    ck.push_u64("run/best_epoch", vec![best_epoch as u64]);
    ck.push_f64("run/best_dev_bleu4", vec![best_bleu4]);
    ck.write(&opts.out_dir.join("best.ckpt"))?;

    let lm = train_text_lm(cfg, &data.train, model.cfg().v_text)?;
    let beam = cfg.beam_config(max_len);
    let (dev_summary, _) = evaluate_split(&model, &data.dev, &beam, Some(&lm), false)?;
    let (test_summary, test_hyps) = evaluate_split(&model, &data.test, &beam, Some(&lm), false)?;
    write_hyp_ref(opts.out_dir, &test_hyps, &data.test)?;

    let report = RunReport {
        regime: opts.regime.as_str().to_string(),
        task: opts.task.as_str().to_string(),
        seed: cfg.seed,
        epochs,
        events: events.iter().map(Event::tsv_line).collect(),
        best_epoch,
        best_dev_bleu4: best_bleu4,
        final_dev: MetricBlock::from_summary(&dev_summary),
        final_test: MetricBlock::from_summary(&test_summary),
        total_wall_clock_s: run_start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Internal(format!("serializing report: {e}")))?;
    write_text(&opts.out_dir.join("report.json"), &json)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

/// Decodes every sample with the configured beam (+ optional LM) and
/// scores against the references. `refs_as_hyps` short-circuits decoding
/// and scores the references against themselves (debug identity: BLEU 1).
pub fn evaluate_split(
    model: &Model,
    samples: &[SampleRecord],
    beam: &BeamConfig,
    lm: Option<&NGramLM>,
    refs_as_hyps: bool,
) -> Result<(EvalSummary, Vec<Vec<usize>>)> {
    if samples.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty split".into()));
    }
    let refs: Vec<Vec<usize>> = samples.iter().map(|s| s.text.clone()).collect();
    let hyps: Vec<Vec<usize>> = if refs_as_hyps {
        refs.clone()
    } else {
        let mut out = Vec::with_capacity(samples.len());
        for s in samples {
            out.push(beam_search(model, &s.frames, beam, lm)?);
        }
        out
    };
    Ok((evaluate_corpus(&hyps, &refs)?, hyps))
}

fn render_tokens(tokens: &[usize]) -> String {
    tokens
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_hyp_ref(dir: &Path, hyps: &[Vec<usize>], samples: &[SampleRecord]) -> Result<()> {
    let mut hyp = String::new();
    let mut reference = String::new();
    for (h, s) in hyps.iter().zip(samples) {
        let _ = writeln!(hyp, "{}", render_tokens(h));
        let _ = writeln!(reference, "{}", render_tokens(&s.text));
    }
    write_text(&dir.join("hyp.txt"), &hyp)?;
    write_text(&dir.join("ref.txt"), &reference)
}

/// Loads a fine-tuned checkpoint and evaluates one split with the beam+LM
/// decoder; optionally writes `hyp.txt`/`ref.txt` into `out_dir`.
pub fn evaluate_checkpoint(
    ckpt: &Path,
    data: &LoadedData,
    split: &str,
    cfg: &RunConfig,
    refs_as_hyps: bool,
    out_dir: Option<&Path>,
) -> Result<EvalSummary> {
    let ck = Checkpoint::read(ckpt)?;
    let model = checkpoint::load_model(&ck)?;
    let samples = data.split(split)?;
    let lm = train_text_lm(cfg, &data.train, model.cfg().v_text)?;
    let beam = cfg.beam_config(decode_limit(cfg, &model));
    let (summary, hyps) = evaluate_split(&model, samples, &beam, Some(&lm), refs_as_hyps)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        write_hyp_ref(dir, &hyps, samples)?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Controller simulation from a metric trace (no training).
// ---------------------------------------------------------------------------

/// Replays a metric-trace CSV through the release controller and returns
/// the event timeline. The header names the monitored metrics (an `epoch`
/// column is allowed and checked against row order); rows after a stop
/// decision are ignored.
pub fn simulate_controller(cfg: &RunConfig, task: Task, trace_csv: &str) -> Result<Vec<Event>> {
    let mut lines = trace_csv.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            file: "trace".into(),
            line: 1,
            msg: "empty metric trace".into(),
        })?
        .trim();
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let mut ctrl = Controller::new(cfg.controller_config(task, cfg.n_backbone))?;
    for (row_idx, raw) in lines.enumerate() {
        let line_no = row_idx + 2;
        let fields: Vec<&str> = raw.trim().split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                file: "trace".into(),
                line: line_no,
                msg: format!("{} fields for {} columns", fields.len(), columns.len()),
            });
        }
        let mut observed = BTreeMap::new();
        for (name, field) in columns.iter().zip(&fields) {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                file: "trace".into(),
                line: line_no,
                msg: format!("{name} expects a number, got {field:?}"),
            })?;
            if name == "epoch" {
                if value != (row_idx + 1) as f64 {
                    return Err(Error::Parse {
                        file: "trace".into(),
                        line: line_no,
                        msg: format!("epoch column says {value}, expected {}", row_idx + 1),
                    });
                }
            } else {
                observed.insert(name.clone(), value);
            }
        }
        match ctrl.observe_epoch(&observed)? {
            EpochDecision::Continue => {}
            // Without a model the release applies instantly; the event
            // timeline is identical to a real run's.
            EpochDecision::ScheduleRelease(_) => {
                ctrl.mark_release_applied()?;
            }
            EpochDecision::Stop => break,
        }
    }
    Ok(ctrl.events().to_vec())
}

/// Renders events as the `events.tsv` byte content.
pub fn events_tsv(events: &[Event]) -> String {
    let mut out = String::new();
    for ev in events {
        let _ = writeln!(out, "{}", ev.tsv_line());
    }
    out
}

pub use crate::data::generate_dataset;

/// Convenience used by the CLI and tests: returns the artifact paths of a
/// run directory.
pub fn run_artifacts(out_dir: &Path) -> [PathBuf; 5] {
    [
        out_dir.join("metrics.csv"),
        out_dir.join("events.tsv"),
        out_dir.join("best.ckpt"),
        out_dir.join("report.json"),
        out_dir.join("hyp.txt"),
    ]
}
