//! AdamW with per-group learning rates, layer-wise LR decay, and warmup.
//!
//! Learning rates follow the layer-distance rule: the translation head
//! trains at its own rates (encoder 5e-5, decoder 1e-4) and backbone layer
//! L_m trains at `lr_backbone_top * alpha^(n-m)`, halving per layer of
//! distance from the head with the default alpha = 1/2.
//!
//! Weight decay is decoupled (applied to the parameter directly, not mixed
//! into the moment estimates). A released layer triggers a full rebuild:
//! the optimizer is constructed anew, so every moment starts at zero and
//! the bias-correction counter restarts. The warmup multiplier is supplied
//! by the caller from the global step count, which releases do not reset.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{Group, Model, TrainableSet};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    /// Rate of the topmost backbone layer L_n.
    pub lr_backbone_top: f64,
    /// Per-layer decay toward the input; LR_m = lr_backbone_top * alpha^(n-m).
    pub llrd_alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip over the trainable set; None disables.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr_encoder: 5e-5,
            lr_decoder: 1e-4,
            lr_backbone_top: 1e-5,
            llrd_alpha: 0.5,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: None,
        }
    }
}

impl OptimConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_encoder", self.lr_encoder),
            ("lr_decoder", self.lr_decoder),
            ("lr_backbone_top", self.lr_backbone_top),
            ("llrd_alpha", self.llrd_alpha),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0,1), got {v}")));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }

    /// Learning rate for one group under the layer-distance rule.
    pub fn group_lr(&self, group: Group, n_backbone: usize) -> f64 {
        match group {
            Group::Encoder => self.lr_encoder,
            Group::Decoder => self.lr_decoder,
            Group::Backbone(m) => {
                let d = (n_backbone - m) as i32;
                self.lr_backbone_top * self.llrd_alpha.powi(d)
            }
        }
    }
}

/// Linear LR ramp over the first `max(200, ceil(0.02 * total_steps))`
/// optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarmupSchedule {
    warmup_steps: usize,
}

impl WarmupSchedule {
    pub fn new(total_training_steps: usize) -> Self {
        let scaled = (0.02 * total_training_steps as f64).ceil() as usize;
        WarmupSchedule {
            warmup_steps: scaled.max(200),
        }
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }

    /// Multiplier for 1-based global step index; reaches 1 at the warmup
    /// boundary and stays there.
    pub fn multiplier(&self, step_index: usize) -> f64 {
        assert!(step_index >= 1, "steps are 1-based");
        if step_index >= self.warmup_steps {
            1.0
        } else {
            step_index as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Debug, Clone)]
struct MomentState {
    m: Mat,
    v: Mat,
}

/// Adaptive-moment optimizer over the trainable subset of a model's
/// parameters. Frozen tensors get no state and are provably never written.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: OptimConfig,
    /// Slot per model tensor; None means frozen.
    slots: Vec<Option<MomentState>>,
    lrs: Vec<f64>,
    t: u64,
}

impl AdamW {
    /// Constructs (or per release semantics, rebuilds) the optimizer for
    /// the given trainable set. All moments start at zero.
    pub fn build(model: &Model, u: &TrainableSet, cfg: OptimConfig) -> Result<AdamW> {
        cfg.validate()?;
        if u.n_backbone() != model.n_backbone() {
            return Err(Error::Config(format!(
                "trainable set covers {} backbone layers, model has {}",
                u.n_backbone(),
                model.n_backbone()
            )));
        }
        let mut slots = Vec::with_capacity(model.num_tensors());
        let mut lrs = Vec::with_capacity(model.num_tensors());
        for p in model.params() {
            if u.contains(p.group) {
                let (r, c) = p.value.shape();
                slots.push(Some(MomentState {
                    m: Mat::zeros(r, c),
                    v: Mat::zeros(r, c),
                }));
                lrs.push(cfg.group_lr(p.group, model.n_backbone()));
            } else {
                slots.push(None);
                lrs.push(0.0);
            }
        }
        Ok(AdamW {
            cfg,
            slots,
            lrs,
            t: 0,
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    /// Tensor indices this optimizer will write; everything else is frozen.
    pub fn active_indices(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|_| i))
            .collect()
    }

    pub fn lr_for(&self, idx: usize) -> f64 {
        self.lrs[idx]
    }

    /// Bias-correction step counter (number of steps taken since build).
    pub fn bias_step(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, idx: usize) -> Option<(&Mat, &Mat)> {
        self.slots[idx].as_ref().map(|s| (&s.m, &s.v))
    }

    /// Restores serialized state (checkpoint loading).
    pub fn set_state(&mut self, idx: usize, m: Mat, v: Mat) -> Result<()> {
        match &mut self.slots[idx] {
            Some(s) => {
                if m.shape() != s.m.shape() || v.shape() != s.v.shape() {
                    return Err(Error::Checkpoint(format!(
                        "moment shape mismatch for tensor {idx}"
                    )));
                }
                s.m = m;
                s.v = v;
                Ok(())
            }
            None => Err(Error::Checkpoint(format!(
                "tensor {idx} is frozen; it has no optimizer state"
            ))),
        }
    }

    pub fn set_bias_step(&mut self, t: u64) {
        self.t = t;
    }

    /// One update over the trainable set. `grads` is indexed like the
    /// model's tensors; every active tensor must have a finite gradient.
    /// `warmup_mult` scales every group's rate uniformly.
    pub fn step(
        &mut self,
        model: &mut Model,
        grads: &[Option<Mat>],
        warmup_mult: f64,
    ) -> Result<()> {
        if grads.len() != self.slots.len() {
            return Err(Error::Argument(format!(
                "{} gradient slots for {} tensors",
                grads.len(),
                self.slots.len()
            )));
        }
        if !(warmup_mult > 0.0 && warmup_mult <= 1.0) {
            return Err(Error::Argument(format!(
                "warmup multiplier {warmup_mult} outside (0,1]"
            )));
        }

        // Validate and optionally clip before mutating any state.
        let mut sq_norm = 0.0;
        for (idx, slot) in self.slots.iter().enumerate() {
            if slot.is_none() {
                continue;
            }
            let g = grads[idx].as_ref().ok_or_else(|| {
                Error::Argument(format!(
                    "missing gradient for trainable tensor {} ({})",
                    idx,
                    model.param(idx).name
                ))
            })?;
            if g.shape() != model.param(idx).value.shape() {
                return Err(Error::Argument(format!(
                    "gradient shape mismatch for {}",
                    model.param(idx).name
                )));
            }
            for &x in g.as_slice() {
                if !x.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient in {} at step {}",
                        model.param(idx).name,
                        self.t + 1
                    )));
                }
                sq_norm += x * x;
            }
        }
        let clip_scale = match self.cfg.clip_norm {
            Some(c) if sq_norm.sqrt() > c => c / sq_norm.sqrt(),
            _ => 1.0,
        };

        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for idx in 0..self.slots.len() {
            let Some(state) = self.slots[idx].as_mut() else {
                continue;
            };
            let g = grads[idx].as_ref().unwrap();
            let lr_eff = self.lrs[idx] * warmup_mult;
            let wd = self.cfg.weight_decay;
            let theta = model.param_mut(idx).value.as_mut_slice();
            for k in 0..theta.len() {
                let gk = g.as_slice()[k] * clip_scale;
                let m = &mut state.m.as_mut_slice()[k];
                *m = self.cfg.beta1 * *m + (1.0 - self.cfg.beta1) * gk;
                let v = &mut state.v.as_mut_slice()[k];
                *v = self.cfg.beta2 * *v + (1.0 - self.cfg.beta2) * gk * gk;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                let old = theta[k];
                theta[k] = old - lr_eff * (m_hat / (v_hat.sqrt() + self.cfg.eps) + wd * old);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::rng::Rng;

    fn tiny_model(n_backbone: usize) -> Model {
        Model::build(
            ModelConfig {
                d_in: 3,
                d_model: 4,
                n_backbone,
                n_encoder: 1,
                n_decoder: 1,
                v_gloss: 2,
                v_text: 5,
                max_text_len: 6,
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn warmup_schedule_boundaries() {
        let w = WarmupSchedule::new(1000);
        assert_eq!(w.warmup_steps(), 200);
        assert!((w.multiplier(1) - 0.005).abs() < 1e-15);
        assert!((w.multiplier(100) - 0.5).abs() < 1e-15);
        assert_eq!(w.multiplier(200), 1.0);
        assert_eq!(w.multiplier(5000), 1.0);

        let w = WarmupSchedule::new(20_000);
        assert_eq!(w.warmup_steps(), 400);
        // Ceiling applies: 0.02 * 10050 = 201.
        assert_eq!(WarmupSchedule::new(10_050).warmup_steps(), 201);
        assert_eq!(WarmupSchedule::new(10_049).warmup_steps(), 201);
    }

    #[test]
    fn llrd_rates_are_exact() {
        let cfg = OptimConfig::default();
        let n = 10;
        assert_eq!(cfg.group_lr(Group::Backbone(10), n), 1e-5);
        assert_eq!(cfg.group_lr(Group::Backbone(9), n), 5e-6);
        assert_eq!(cfg.group_lr(Group::Backbone(7), n), 1.25e-6);
        assert_eq!(cfg.group_lr(Group::Encoder, n), 5e-5);
        assert_eq!(cfg.group_lr(Group::Decoder, n), 1e-4);
        // Consecutive layers differ by exactly 1/alpha, decreasing toward
        // the input.
        for m in 2..=n {
            let hi = cfg.group_lr(Group::Backbone(m), n);
            let lo = cfg.group_lr(Group::Backbone(m - 1), n);
            assert!((hi / lo - 2.0).abs() < 1e-12);
        }
    }

    fn full_grads(model: &Model, value: f64) -> Vec<Option<Mat>> {
        model
            .params()
            .iter()
            .map(|p| {
                let (r, c) = p.value.shape();
                Some(Mat::from_fn(r, c, |_, _| value))
            })
            .collect()
    }

    #[test]
    fn zero_gradients_cause_pure_decay_shrinkage() {
        let mut model = tiny_model(2);
        let u = TrainableSet::full(2);
        let mut opt = AdamW::build(&model, &u, OptimConfig::default()).unwrap();
        let before: Vec<f64> = model
            .params()
            .iter()
            .flat_map(|p| p.value.as_slice().to_vec())
            .collect();
        let grads = full_grads(&model, 0.0);
        opt.step(&mut model, &grads, 1.0).unwrap();
        let mut i = 0;
        for (idx, p) in model.params().iter().enumerate() {
            let lr = opt.lr_for(idx);
            let wd = opt.config().weight_decay;
            for &after in p.value.as_slice() {
                // Zero moments make the adaptive term exactly 0, leaving
                // theta - lr * (wd * theta) with this exact association.
                let expected = before[i] - lr * (wd * before[i]);
                assert_eq!(after, expected, "{}", p.name);
                i += 1;
            }
        }
    }

    #[test]
    fn first_step_matches_hand_computed_moment_update() {
        let mut model = tiny_model(2);
        let u = TrainableSet::full(2);
        let cfg = OptimConfig::default();
        let mut opt = AdamW::build(&model, &u, cfg.clone()).unwrap();
        let g = 0.37;
        let idx = model.param_index("bb2.w").unwrap();
        let theta0 = model.param(idx).value.at(0, 0);
        let grads = full_grads(&model, g);
        opt.step(&mut model, &grads, 1.0).unwrap();

        // First step: m_hat = g, v_hat = g^2, so the adaptive term is
        // g / (|g| + eps).
        let lr = cfg.group_lr(Group::Backbone(2), 2);
        let expected =
            theta0 - lr * (g / (g.abs() + cfg.eps) + cfg.weight_decay * theta0);
        let actual = model.param(idx).value.at(0, 0);
        assert!(
            (actual - expected).abs() < 1e-18,
            "{actual} vs {expected}"
        );
        assert_eq!(opt.bias_step(), 1);
    }

    #[test]
    fn warmup_scales_the_whole_update() {
        let model0 = tiny_model(2);
        let u = TrainableSet::full(2);
        let cfg = OptimConfig::default();
        let g = 0.5;

        let mut m_full = model0.clone();
        let mut opt_full = AdamW::build(&m_full, &u, cfg.clone()).unwrap();
        opt_full
            .step(&mut m_full, &full_grads(&model0, g), 1.0)
            .unwrap();

        let mut m_warm = model0.clone();
        let mut opt_warm = AdamW::build(&m_warm, &u, cfg).unwrap();
        opt_warm
            .step(&mut m_warm, &full_grads(&model0, g), 0.25)
            .unwrap();

        let idx = model0.param_index("dec_out.w").unwrap();
        let t0 = model0.param(idx).value.at(0, 0);
        let d_full = m_full.param(idx).value.at(0, 0) - t0;
        let d_warm = m_warm.param(idx).value.at(0, 0) - t0;
        // The parameter subtraction rounds near theta's magnitude, so allow
        // a few ulps of theta rather than of the tiny update itself.
        assert!((d_warm - 0.25 * d_full).abs() < 1e-15, "{d_warm} vs {d_full}");
    }

    #[test]
    fn frozen_groups_are_never_written() {
        let mut model = tiny_model(3);
        let mut u = TrainableSet::head_only(3);
        u.release(3).unwrap();
        let mut opt = AdamW::build(&model, &u, OptimConfig::default()).unwrap();

        let frozen: Vec<usize> = (0..model.num_tensors())
            .filter(|&i| !u.contains(model.param(i).group))
            .collect();
        assert!(!frozen.is_empty());
        let before: Vec<Mat> = frozen.iter().map(|&i| model.param(i).value.clone()).collect();

        let mut rng = Rng::seed_from(3);
        for _ in 0..50 {
            let grads: Vec<Option<Mat>> = model
                .params()
                .iter()
                .map(|p| {
                    let (r, c) = p.value.shape();
                    Some(Mat::randn(r, c, 1.0, &mut rng))
                })
                .collect();
            opt.step(&mut model, &grads, 1.0).unwrap();
        }
        for (&i, orig) in frozen.iter().zip(&before) {
            assert_eq!(&model.param(i).value, orig, "{} moved", model.param(i).name);
        }

        // Instrumentation: the active set is exactly U's membership.
        let active = opt.active_indices();
        for i in 0..model.num_tensors() {
            let should = u.contains(model.param(i).group);
            assert_eq!(active.contains(&i), should);
        }
    }

    #[test]
    fn rebuild_zeroes_all_state() {
        let mut model = tiny_model(2);
        let u = TrainableSet::head_only(2);
        let mut opt = AdamW::build(&model, &u, OptimConfig::default()).unwrap();
        for _ in 0..3 {
            let grads = full_grads(&model, 0.2);
            opt.step(&mut model, &grads, 1.0).unwrap();
        }
        assert_eq!(opt.bias_step(), 3);
        let idx = model.param_index("dec.embed").unwrap();
        let (m, _) = opt.moments(idx).unwrap();
        assert!(m.as_slice().iter().any(|&x| x != 0.0));

        let mut u2 = u.clone();
        u2.release(2).unwrap();
        let rebuilt = AdamW::build(&model, &u2, OptimConfig::default()).unwrap();
        assert_eq!(rebuilt.bias_step(), 0);
        for i in rebuilt.active_indices() {
            let (m, v) = rebuilt.moments(i).unwrap();
            assert!(m.as_slice().iter().all(|&x| x == 0.0));
            assert!(v.as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn nan_gradients_abort() {
        let mut model = tiny_model(2);
        let u = TrainableSet::full(2);
        let mut opt = AdamW::build(&model, &u, OptimConfig::default()).unwrap();
        let mut grads = full_grads(&model, 0.1);
        let idx = model.param_index("enc1.wq").unwrap();
        grads[idx].as_mut().unwrap().as_mut_slice()[0] = f64::NAN;
        match opt.step(&mut model, &grads, 1.0) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("enc1.wq")),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn missing_gradient_for_active_tensor_is_an_error() {
        let mut model = tiny_model(2);
        let u = TrainableSet::full(2);
        let mut opt = AdamW::build(&model, &u, OptimConfig::default()).unwrap();
        let mut grads = full_grads(&model, 0.1);
        grads[0] = None;
        assert!(opt.step(&mut model, &grads, 1.0).is_err());
    }

    #[test]
    fn global_norm_clip_rescales_gradients() {
        let model0 = tiny_model(2);
        let u = TrainableSet::full(2);
        let g = 0.5;
        let total: usize = model0.params().iter().map(|p| p.value.len()).sum();
        let norm = g * (total as f64).sqrt();
        let clip = norm / 4.0;

        let mut clipped_cfg = OptimConfig::default();
        clipped_cfg.clip_norm = Some(clip);
        let mut m_clip = model0.clone();
        let mut opt_clip = AdamW::build(&m_clip, &u, clipped_cfg).unwrap();
        opt_clip
            .step(&mut m_clip, &full_grads(&model0, g), 1.0)
            .unwrap();

        // Equivalent unclipped run with pre-scaled gradients.
        let mut m_ref = model0.clone();
        let mut opt_ref = AdamW::build(&m_ref, &u, OptimConfig::default()).unwrap();
        opt_ref
            .step(&mut m_ref, &full_grads(&model0, g / 4.0), 1.0)
            .unwrap();

        for (a, b) in m_clip.params().iter().zip(m_ref.params()) {
            for (x, y) in a.value.as_slice().iter().zip(b.value.as_slice()) {
                assert!((x - y).abs() < 1e-15, "{}", a.name);
            }
        }
    }
}
