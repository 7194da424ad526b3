//! Versioned binary checkpoints for parameters, optimizer, controller, and
//! RNG state.
//!
//! # File layout (version 1)
//!
//! All integers are little-endian.
//!
//! ```text
//! magic    8 bytes   b"HATLCKPT"
//! version  u32       1
//! count    u32       number of sections
//! section  repeated:
//!   name_len u32, name bytes (UTF-8)
//!   kind     u8     0 = f64 array, 1 = u64 array, 2 = UTF-8 string
//!   len      u64    element count (bytes for strings)
//!   payload  len *  8 bytes (f64/u64 LE) or len bytes (string)
//! ```
//!
//! Section names used by the trainer:
//! - `model/dims` (u64): `d_in d_model n_backbone n_encoder n_decoder
//!   v_gloss v_text max_text_len`
//! - `model/trainable` (u64): `includes_head` then released layer indices
//! - `param/<tensor>` (f64): row-major tensor values, one per model tensor
//! - `optim/meta` (u64): `bias_step global_step`
//! - `optim/m/<tensor>`, `optim/v/<tensor>` (f64): Adam moments for
//!   trainable tensors
//! - `ctrl/state` (u64), `ctrl/deltas` (f64), `ctrl/history/<i>` (f64):
//!   controller scalars, current thresholds, metric histories
//! - `best/meta` (f64): `epoch dev_metric`, with `best/param/<tensor>`
//!   (f64) holding the snapshot values
//! - `rng/state` (u64): the four xoshiro words
//! - `meta/<key>` (string): free-form provenance such as task and regime

use std::path::Path;

use crate::controller::{Controller, ControllerConfig, ControllerState};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Model, ModelConfig, ParamSnapshot, TrainableSet};
use crate::optim::AdamW;
use crate::rng::Rng;

const MAGIC: &[u8; 8] = b"HATLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Str(String),
}

/// An ordered collection of named sections.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    sections: Vec<(String, Section)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_f64(&mut self, name: impl Into<String>, data: Vec<f64>) {
        self.sections.push((name.into(), Section::F64(data)));
    }

    pub fn push_u64(&mut self, name: impl Into<String>, data: Vec<u64>) {
        self.sections.push((name.into(), Section::U64(data)));
    }

    pub fn push_str(&mut self, name: impl Into<String>, data: impl Into<String>) {
        self.sections.push((name.into(), Section::Str(data.into())));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::Checkpoint(format!("missing section {name:?}")))
    }

    pub fn f64(&self, name: &str) -> Result<&[f64]> {
        match self.section(name)? {
            Section::F64(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("section {name:?} is not f64 data"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<&[u64]> {
        match self.section(name)? {
            Section::U64(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("section {name:?} is not u64 data"))),
        }
    }

    pub fn str(&self, name: &str) -> Result<&str> {
        match self.section(name)? {
            Section::Str(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("section {name:?} is not a string"))),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, section) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match section {
                Section::F64(v) => {
                    out.push(0);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::U64(v) => {
                    out.push(1);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::Str(v) => {
                    out.push(2);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    out.extend_from_slice(v.as_bytes());
                }
            }
        }
        std::fs::write(path, out)
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        let corrupt = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos.checked_add(n).ok_or_else(|| corrupt("length overflow"))?;
            if end > bytes.len() {
                return Err(corrupt("truncated file"));
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(corrupt("bad magic (not a checkpoint file)"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| corrupt("section name is not UTF-8"))?
                .to_string();
            let kind = take(1)?[0];
            let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let section = match kind {
                0 => {
                    let raw = take(len.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
                    Section::F64(
                        raw.chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                1 => {
                    let raw = take(len.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
                    Section::U64(
                        raw.chunks_exact(8)
                            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                            .collect(),
                    )
                }
                2 => Section::Str(
                    std::str::from_utf8(take(len)?)
                        .map_err(|_| corrupt("string section is not UTF-8"))?
                        .to_string(),
                ),
                k => return Err(corrupt(&format!("unknown section kind {k}"))),
            };
            sections.push((name, section));
        }
        if pos != bytes.len() {
            return Err(corrupt("trailing bytes after last section"));
        }
        Ok(Checkpoint { sections })
    }
}

fn dims_of(cfg: &ModelConfig) -> Vec<u64> {
    vec![
        cfg.d_in as u64,
        cfg.d_model as u64,
        cfg.n_backbone as u64,
        cfg.n_encoder as u64,
        cfg.n_decoder as u64,
        cfg.v_gloss as u64,
        cfg.v_text as u64,
        cfg.max_text_len as u64,
    ]
}

fn dims_from(raw: &[u64]) -> Result<ModelConfig> {
    if raw.len() != 8 {
        return Err(Error::Checkpoint(format!(
            "model/dims has {} entries, expected 8",
            raw.len()
        )));
    }
    Ok(ModelConfig {
        d_in: raw[0] as usize,
        d_model: raw[1] as usize,
        n_backbone: raw[2] as usize,
        n_encoder: raw[3] as usize,
        n_decoder: raw[4] as usize,
        v_gloss: raw[5] as usize,
        v_text: raw[6] as usize,
        max_text_len: raw[7] as usize,
    })
}

/// Stores dimensions, the trainable set, and every parameter tensor.
pub fn put_model(ck: &mut Checkpoint, model: &Model) {
    ck.push_u64("model/dims", dims_of(model.cfg()));
    let u = model.trainable();
    let mut flags = vec![u64::from(u.includes_head())];
    for m in 1..=model.cfg().n_backbone {
        if u.contains(crate::model::Group::Backbone(m)) {
            flags.push(m as u64);
        }
    }
    ck.push_u64("model/trainable", flags);
    for p in model.params() {
        ck.push_f64(format!("param/{}", p.name), p.value.as_slice().to_vec());
    }
}

/// Rebuilds the model a checkpoint describes; every tensor must be present
/// with the right size.
pub fn load_model(ck: &Checkpoint) -> Result<Model> {
    let cfg = dims_from(ck.u64("model/dims")?)?;
    let mut model = Model::build(cfg, 0)?;
    for i in 0..model.num_tensors() {
        let name = model.param(i).name.clone();
        let data = ck.f64(&format!("param/{name}"))?;
        let value = &mut model.param_mut(i).value;
        if data.len() != value.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has {} values, expected {}",
                data.len(),
                value.len()
            )));
        }
        value.as_mut_slice().copy_from_slice(data);
    }
    let flags = ck.u64("model/trainable")?;
    if flags.first() != Some(&1) {
        return Err(Error::Checkpoint(
            "checkpoint trainable set does not include the translation head".into(),
        ));
    }
    let mut u = TrainableSet::head_only(model.cfg().n_backbone);
    for &m in &flags[1..] {
        u.release(m as usize)
            .map_err(|e| Error::Checkpoint(format!("bad trainable set: {e}")))?;
    }
    model.set_trainable(u)?;
    Ok(model)
}

/// Stores only the backbone tensors (the pretraining product); the
/// fine-tuning model keeps its fresh translation head.
pub fn put_backbone(ck: &mut Checkpoint, model: &Model) {
    ck.push_u64("model/dims", dims_of(model.cfg()));
    for p in model.params() {
        if matches!(p.group, crate::model::Group::Backbone(_)) {
            ck.push_f64(format!("param/{}", p.name), p.value.as_slice().to_vec());
        }
    }
}

/// Copies backbone tensors from a (possibly backbone-only) checkpoint into
/// an existing model, leaving head parameters untouched.
pub fn load_backbone_into(ck: &Checkpoint, model: &mut Model) -> Result<()> {
    let cfg = dims_from(ck.u64("model/dims")?)?;
    let have = model.cfg();
    if cfg.d_in != have.d_in || cfg.d_model != have.d_model || cfg.n_backbone != have.n_backbone
        || cfg.v_gloss != have.v_gloss
    {
        return Err(Error::Checkpoint(format!(
            "backbone architecture mismatch: checkpoint d_in={} d_model={} n_backbone={} \
             v_gloss={}, model d_in={} d_model={} n_backbone={} v_gloss={}",
            cfg.d_in,
            cfg.d_model,
            cfg.n_backbone,
            cfg.v_gloss,
            have.d_in,
            have.d_model,
            have.n_backbone,
            have.v_gloss
        )));
    }
    for i in 0..model.num_tensors() {
        if !matches!(model.param(i).group, crate::model::Group::Backbone(_)) {
            continue;
        }
        let name = model.param(i).name.clone();
        let data = ck.f64(&format!("param/{name}"))?;
        let value = &mut model.param_mut(i).value;
        if data.len() != value.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has {} values, expected {}",
                data.len(),
                value.len()
            )));
        }
        value.as_mut_slice().copy_from_slice(data);
    }
    Ok(())
}

/// Stores Adam moments for the trainable tensors plus the step counters.
pub fn put_optimizer(ck: &mut Checkpoint, model: &Model, opt: &AdamW, global_step: u64) {
    ck.push_u64("optim/meta", vec![opt.bias_step(), global_step]);
    for idx in opt.active_indices() {
        if let Some((m, v)) = opt.moments(idx) {
            let name = &model.param(idx).name;
            ck.push_f64(format!("optim/m/{name}"), m.as_slice().to_vec());
            ck.push_f64(format!("optim/v/{name}"), v.as_slice().to_vec());
        }
    }
}

/// Restores moments into a freshly built optimizer; returns the global
/// step counter.
pub fn load_optimizer_state(ck: &Checkpoint, model: &Model, opt: &mut AdamW) -> Result<u64> {
    let meta = ck.u64("optim/meta")?;
    if meta.len() != 2 {
        return Err(Error::Checkpoint("optim/meta should hold two counters".into()));
    }
    opt.set_bias_step(meta[0]);
    for idx in opt.active_indices() {
        let name = model.param(idx).name.clone();
        let m = ck.f64(&format!("optim/m/{name}"))?;
        let v = ck.f64(&format!("optim/v/{name}"))?;
        let shape = model.param(idx).value.shape();
        let expect = shape.0 * shape.1;
        if m.len() != expect || v.len() != expect {
            return Err(Error::Checkpoint(format!(
                "moment size mismatch for {name}: {} / {} vs {expect}",
                m.len(),
                v.len()
            )));
        }
        let mut mm = Mat::zeros(shape.0, shape.1);
        mm.as_mut_slice().copy_from_slice(m);
        let mut vv = Mat::zeros(shape.0, shape.1);
        vv.as_mut_slice().copy_from_slice(v);
        opt.set_state(idx, mm, vv)?;
    }
    Ok(meta[1])
}

/// Stores the controller's evolving state and, when present, the best
/// parameter snapshot it guards.
pub fn put_controller(ck: &mut Checkpoint, ctrl: &Controller) {
    let st = ctrl.export_state();
    ck.push_u64(
        "ctrl/state",
        vec![
            st.epoch as u64,
            st.plateau_streak as u64,
            st.early_stop_streak as u64,
            st.released as u64,
            st.pending.is_some() as u64,
            st.pending.unwrap_or(0) as u64,
            st.cooldown_remaining as u64,
            st.finished as u64,
            st.last_decay_epoch as u64,
        ],
    );
    ck.push_f64("ctrl/deltas", st.deltas.clone());
    for (i, values) in st.metric_values.iter().enumerate() {
        ck.push_f64(format!("ctrl/history/{i}"), values.clone());
    }
    if let Some(snap) = ctrl.best_snapshot() {
        ck.push_f64("best/meta", vec![snap.epoch as f64, snap.dev_metric]);
        for (i, m) in snap.values().iter().enumerate() {
            ck.push_f64(format!("best/param/{i}"), m.as_slice().to_vec());
        }
    }
}

/// Restores a controller; the best snapshot (if stored) is reassembled
/// against the given model's tensor shapes.
pub fn load_controller(
    ck: &Checkpoint,
    cfg: ControllerConfig,
    model: &Model,
) -> Result<Controller> {
    let raw = ck.u64("ctrl/state")?;
    if raw.len() != 9 {
        return Err(Error::Checkpoint("ctrl/state should hold nine scalars".into()));
    }
    let n_metrics = cfg.metrics.len();
    let mut metric_values = Vec::with_capacity(n_metrics);
    for i in 0..n_metrics {
        metric_values.push(ck.f64(&format!("ctrl/history/{i}"))?.to_vec());
    }
    let state = ControllerState {
        epoch: raw[0] as usize,
        plateau_streak: raw[1] as usize,
        early_stop_streak: raw[2] as usize,
        released: raw[3] as usize,
        pending: (raw[4] == 1).then_some(raw[5] as usize),
        cooldown_remaining: raw[6] as usize,
        finished: raw[7] == 1,
        last_decay_epoch: raw[8] as usize,
        deltas: ck.f64("ctrl/deltas")?.to_vec(),
        metric_values,
    };
    let mut ctrl = Controller::import_state(cfg, &state)?;
    if ck.has("best/meta") {
        let meta = ck.f64("best/meta")?;
        if meta.len() != 2 {
            return Err(Error::Checkpoint("best/meta should hold two values".into()));
        }
        let mut values = Vec::with_capacity(model.num_tensors());
        for i in 0..model.num_tensors() {
            let data = ck.f64(&format!("best/param/{i}"))?;
            let shape = model.param(i).value.shape();
            if data.len() != shape.0 * shape.1 {
                return Err(Error::Checkpoint(format!(
                    "best snapshot tensor {i} has {} values, expected {}",
                    data.len(),
                    shape.0 * shape.1
                )));
            }
            let mut m = Mat::zeros(shape.0, shape.1);
            m.as_mut_slice().copy_from_slice(data);
            values.push(m);
        }
        ctrl.store_best_snapshot(ParamSnapshot::from_values(
            meta[0] as usize,
            meta[1],
            values,
        ));
    }
    Ok(ctrl)
}

pub fn put_rng(ck: &mut Checkpoint, rng: &Rng) {
    ck.push_u64("rng/state", rng.state().to_vec());
}

pub fn load_rng(ck: &Checkpoint) -> Result<Rng> {
    let raw = ck.u64("rng/state")?;
    let state: [u64; 4] = raw
        .try_into()
        .map_err(|_| Error::Checkpoint("rng/state should hold four words".into()))?;
    Ok(Rng::from_state(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::optim::OptimConfig;

    fn tiny_model(seed: u64) -> Model {
        Model::build(
            ModelConfig {
                d_in: 4,
                d_model: 6,
                n_backbone: 2,
                n_encoder: 1,
                n_decoder: 1,
                v_gloss: 4,
                v_text: 5,
                max_text_len: 6,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn raw_sections_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let mut ck = Checkpoint::new();
        ck.push_f64("a", vec![1.5, -2.25, f64::MIN_POSITIVE]);
        ck.push_u64("b", vec![u64::MAX, 0, 42]);
        ck.push_str("meta/task", "s2g2t");
        ck.write(&path).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        assert_eq!(back.f64("a").unwrap(), &[1.5, -2.25, f64::MIN_POSITIVE]);
        assert_eq!(back.u64("b").unwrap(), &[u64::MAX, 0, 42]);
        assert_eq!(back.str("meta/task").unwrap(), "s2g2t");
        assert!(back.f64("missing").is_err());
        assert!(back.f64("b").is_err());
    }

    #[test]
    fn corrupt_files_are_checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        let mut ck = Checkpoint::new();
        ck.push_f64("a", vec![1.0, 2.0]);
        ck.write(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Checkpoint::read(&path), Err(Error::Checkpoint(_))));
        std::fs::write(&path, b"NOTACKPT").unwrap();
        assert!(matches!(Checkpoint::read(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn model_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = tiny_model(5);
        let mut u = model.trainable().clone();
        u.release(2).unwrap();
        model.set_trainable(u).unwrap();
        let mut ck = Checkpoint::new();
        put_model(&mut ck, &model);
        ck.write(&path).unwrap();
        let loaded = load_model(&Checkpoint::read(&path).unwrap()).unwrap();
        assert_eq!(loaded.cfg(), model.cfg());
        assert_eq!(loaded.trainable(), model.trainable());
        for i in 0..model.num_tensors() {
            assert_eq!(
                loaded.param(i).value.as_slice(),
                model.param(i).value.as_slice(),
                "tensor {}",
                model.param(i).name
            );
        }
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let model = tiny_model(5);
        let mut ck = Checkpoint::new();
        put_backbone(&mut ck, &model);
        let mut other = Model::build(
            ModelConfig {
                d_model: 8,
                ..model.cfg().clone()
            },
            9,
        )
        .unwrap();
        assert!(matches!(
            load_backbone_into(&ck, &mut other),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn backbone_surgery_keeps_the_head_fresh() {
        let pretrained = tiny_model(5);
        let mut ck = Checkpoint::new();
        put_backbone(&mut ck, &pretrained);
        let mut target = tiny_model(77);
        let head_before: Vec<Vec<f64>> = target
            .params()
            .iter()
            .filter(|p| !matches!(p.group, crate::model::Group::Backbone(_)))
            .map(|p| p.value.as_slice().to_vec())
            .collect();
        load_backbone_into(&ck, &mut target).unwrap();
        for i in 0..target.num_tensors() {
            let p = target.param(i);
            if matches!(p.group, crate::model::Group::Backbone(_)) {
                let src = pretrained.param_index(&p.name).unwrap();
                assert_eq!(p.value.as_slice(), pretrained.param(src).value.as_slice());
            }
        }
        let head_after: Vec<Vec<f64>> = target
            .params()
            .iter()
            .filter(|p| !matches!(p.group, crate::model::Group::Backbone(_)))
            .map(|p| p.value.as_slice().to_vec())
            .collect();
        assert_eq!(head_before, head_after);
    }

    #[test]
    fn optimizer_state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.ckpt");
        let mut model = tiny_model(3);
        let mut opt = AdamW::build(&model, model.trainable(), OptimConfig::default()).unwrap();
        // Take a step so the moments are non-trivial.
        let grads: Vec<Option<Mat>> = (0..model.num_tensors())
            .map(|i| {
                let (r, c) = model.param(i).value.shape();
                Some(Mat::from_fn(r, c, |a, b| ((a + b) as f64).sin()))
            })
            .collect();
        opt.step(&mut model, &grads, 0.5).unwrap();
        let mut ck = Checkpoint::new();
        put_model(&mut ck, &model);
        put_optimizer(&mut ck, &model, &opt, 17);
        ck.write(&path).unwrap();

        let back = Checkpoint::read(&path).unwrap();
        let loaded_model = load_model(&back).unwrap();
        let mut fresh =
            AdamW::build(&loaded_model, loaded_model.trainable(), OptimConfig::default()).unwrap();
        let step = load_optimizer_state(&back, &loaded_model, &mut fresh).unwrap();
        assert_eq!(step, 17);
        assert_eq!(fresh.bias_step(), opt.bias_step());
        for idx in opt.active_indices() {
            let (m0, v0) = opt.moments(idx).unwrap();
            let (m1, v1) = fresh.moments(idx).unwrap();
            assert_eq!(m0.as_slice(), m1.as_slice());
            assert_eq!(v0.as_slice(), v1.as_slice());
        }
    }

    #[test]
    fn controller_and_rng_round_trip() {
        use std::collections::BTreeMap;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let model = tiny_model(4);
        let cfg = ControllerConfig::s2t(2);
        let mut ctrl = Controller::new(cfg.clone()).unwrap();
        let mut metrics = BTreeMap::new();
        for e in 1..=5 {
            metrics.insert("dev_bleu4".to_string(), 0.1 + 0.001 * e as f64);
            ctrl.observe_epoch(&metrics).unwrap();
        }
        ctrl.store_best_snapshot(model.snapshot(5, 0.105));
        let mut rng = Rng::seed_from(123);
        for _ in 0..10 {
            rng.next_u64();
        }

        let mut ck = Checkpoint::new();
        put_controller(&mut ck, &ctrl);
        put_rng(&mut ck, &rng);
        ck.write(&path).unwrap();

        let back = Checkpoint::read(&path).unwrap();
        let restored = load_controller(&back, cfg, &model).unwrap();
        assert_eq!(restored.export_state(), ctrl.export_state());
        let snap = restored.best_snapshot().unwrap();
        assert_eq!(snap.epoch, 5);
        for (a, b) in snap.values().iter().zip(ctrl.best_snapshot().unwrap().values()) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        let mut restored_rng = load_rng(&back).unwrap();
        assert_eq!(restored_rng.next_u64(), rng.next_u64());
    }
}
