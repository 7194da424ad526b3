//! Performance-aware progressive unfreezing: the training controller.
//!
//! After a fixed warmup, the controller watches dev metrics once per epoch.
//! An epoch counts toward a plateau when, for every monitored metric, the
//! value sits within Δ of its own moving average and improves on the best
//! observed value by less than τ. A streak of `patience` such epochs
//! schedules the release of the next backbone layer (top-down). Applying a
//! release restores the best parameter snapshot, expands the trainable set
//! by one layer, rebuilds the optimizer, and starts a cooldown during which
//! neither plateaus nor the stopping rule advance. Δ decays by a fixed
//! factor every few epochs; training stops after a run of non-cooldown
//! epochs without a new best on the primary metric.
//!
//! The controller is a pure function of its config and the metric trace,
//! which is what `simulate-controller` exploits: it replays a CSV of
//! metrics through [`Controller`] and writes the same `events.tsv` a real
//! training run would produce.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Model, ParamSnapshot, TrainableSet};
use crate::optim::AdamW;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoredMetric {
    pub name: String,
    pub direction: Direction,
    /// Plateau band: criterion (i) is |M(e) - smoothed| <= delta.
    pub delta: f64,
}

/// Reading of plateau criterion (ii).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion2 {
    /// Improvement over the best observed value is < tau.
    BestImprovement,
    /// |M(e) - smoothed| <= tau (same expression as criterion (i)).
    Smoothed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub metrics: Vec<MonitoredMetric>,
    /// Metric that defines "best" for snapshots and early stopping.
    pub primary: String,
    pub tau: f64,
    /// Moving-average window k.
    pub window: usize,
    pub warmup_epochs: usize,
    /// Consecutive plateau epochs required to schedule a release.
    pub patience: usize,
    /// Epochs after a release during which monitoring is suspended.
    pub cooldown: usize,
    /// Non-cooldown epochs without a primary new best before stopping.
    pub early_stop_patience: usize,
    pub delta_decay: f64,
    pub delta_decay_period: usize,
    /// Backbone layers available for release (0 disables releases; the
    /// controller then only tracks bests and stops).
    pub releasable_layers: usize,
    pub criterion2: Criterion2,
}

impl ControllerConfig {
    /// Gloss-supervised task: joint plateau over dev CTC loss and BLEU-4.
    pub fn s2g2t(releasable_layers: usize) -> Self {
        ControllerConfig {
            metrics: vec![
                MonitoredMetric {
                    name: "dev_ctc".into(),
                    direction: Direction::Minimize,
                    delta: 0.003,
                },
                MonitoredMetric {
                    name: "dev_bleu4".into(),
                    direction: Direction::Maximize,
                    delta: 0.002,
                },
            ],
            primary: "dev_bleu4".into(),
            tau: 0.002,
            window: 3,
            warmup_epochs: 2,
            patience: 4,
            cooldown: 3,
            early_stop_patience: 5,
            delta_decay: 0.95,
            delta_decay_period: 5,
            releasable_layers,
            criterion2: Criterion2::BestImprovement,
        }
    }

    /// Text-only task: BLEU-4 is the only monitored metric.
    pub fn s2t(releasable_layers: usize) -> Self {
        let mut cfg = Self::s2g2t(releasable_layers);
        cfg.metrics.remove(0);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::Config("no monitored metrics".into()));
        }
        if !self.metrics.iter().any(|m| m.name == self.primary) {
            return Err(Error::Config(format!(
                "primary metric {} is not monitored",
                self.primary
            )));
        }
        for m in &self.metrics {
            if !(m.delta > 0.0) {
                return Err(Error::Config(format!("delta for {} must be > 0", m.name)));
            }
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config("tau must be > 0".into()));
        }
        if self.window == 0 || self.patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config(
                "window, patience and early_stop_patience must be >= 1".into(),
            ));
        }
        if !(self.delta_decay > 0.0 && self.delta_decay <= 1.0) {
            return Err(Error::Config("delta_decay must be in (0,1]".into()));
        }
        if self.delta_decay_period == 0 {
            return Err(Error::Config("delta_decay_period must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    WarmupEnd,
    PlateauTick,
    ReleaseScheduled,
    ReleaseApplied,
    CooldownEnd,
    NewBest,
    Stop,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::WarmupEnd => "warmup_end",
            EventKind::PlateauTick => "plateau_tick",
            EventKind::ReleaseScheduled => "release_scheduled",
            EventKind::ReleaseApplied => "release_applied",
            EventKind::CooldownEnd => "cooldown_end",
            EventKind::NewBest => "new_best",
            EventKind::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub epoch: usize,
    pub kind: EventKind,
    pub detail: String,
}

impl Event {
    pub fn tsv_line(&self) -> String {
        format!("{}\t{}\t{}", self.epoch, self.kind.as_str(), self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochDecision {
    Continue,
    /// Release backbone layer L_m at the start of the next epoch.
    ScheduleRelease(usize),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Monitoring,
    Cooldown,
    Finished,
}

/// Raw values plus derived running statistics for one monitored metric.
#[derive(Debug, Clone)]
struct MetricHistory {
    values: Vec<f64>,
    best: Option<f64>,
}

struct MetricUpdate {
    smoothed: f64,
    /// Signed improvement over the previous best (positive = better);
    /// +inf when no best existed yet.
    improvement: f64,
    new_best: bool,
}

impl MetricHistory {
    fn new() -> Self {
        MetricHistory {
            values: Vec::new(),
            best: None,
        }
    }

    fn push(&mut self, value: f64, direction: Direction, window: usize) -> MetricUpdate {
        self.values.push(value);
        let e = self.values.len();
        let w = window.min(e);
        let smoothed = self.values[e - w..].iter().sum::<f64>() / w as f64;
        let improvement = match self.best {
            None => f64::INFINITY,
            Some(b) => match direction {
                Direction::Maximize => value - b,
                Direction::Minimize => b - value,
            },
        };
        let new_best = improvement > 0.0;
        if new_best {
            self.best = Some(value);
        }
        MetricUpdate {
            smoothed,
            improvement,
            new_best,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    histories: Vec<MetricHistory>,
    /// Current (decayed) Δ per monitored metric.
    deltas: Vec<f64>,
    epoch: usize,
    plateau_streak: usize,
    early_stop_streak: usize,
    released: usize,
    pending: Option<usize>,
    cooldown_remaining: usize,
    finished: bool,
    last_decay_epoch: usize,
    primary_idx: usize,
    new_best_this_epoch: bool,
    best_snapshot: Option<ParamSnapshot>,
    events: Vec<Event>,
}

/// Plain serializable mirror of the controller's evolving state (config
/// and best snapshot are stored separately in checkpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub epoch: usize,
    pub plateau_streak: usize,
    pub early_stop_streak: usize,
    pub released: usize,
    pub pending: Option<usize>,
    pub cooldown_remaining: usize,
    pub finished: bool,
    pub last_decay_epoch: usize,
    pub deltas: Vec<f64>,
    pub metric_values: Vec<Vec<f64>>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Controller> {
        cfg.validate()?;
        let primary_idx = cfg
            .metrics
            .iter()
            .position(|m| m.name == cfg.primary)
            .expect("validated");
        let histories = cfg.metrics.iter().map(|_| MetricHistory::new()).collect();
        let deltas = cfg.metrics.iter().map(|m| m.delta).collect();
        Ok(Controller {
            cfg,
            histories,
            deltas,
            epoch: 0,
            plateau_streak: 0,
            early_stop_streak: 0,
            released: 0,
            pending: None,
            cooldown_remaining: 0,
            finished: false,
            last_decay_epoch: 0,
            primary_idx,
            new_best_this_epoch: false,
            best_snapshot: None,
            events: Vec::new(),
        })
    }

    pub fn cfg(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn phase(&self) -> Phase {
        if self.finished {
            Phase::Finished
        } else if self.epoch < self.cfg.warmup_epochs {
            Phase::Warmup
        } else if self.cooldown_remaining > 0 {
            Phase::Cooldown
        } else {
            Phase::Monitoring
        }
    }

    pub fn released_layers(&self) -> usize {
        self.released
    }

    pub fn pending_release(&self) -> Option<usize> {
        self.pending
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Current Δ for a monitored metric (after any decay so far).
    pub fn current_delta(&self, name: &str) -> Option<f64> {
        self.cfg
            .metrics
            .iter()
            .position(|m| m.name == name)
            .map(|i| self.deltas[i])
    }

    pub fn tau(&self) -> f64 {
        self.cfg.tau
    }

    /// Whether the most recent `observe_epoch` set a primary-metric best.
    pub fn primary_improved(&self) -> bool {
        self.new_best_this_epoch
    }

    pub fn best_primary(&self) -> Option<f64> {
        self.histories[self.primary_idx].best
    }

    pub fn store_best_snapshot(&mut self, snap: ParamSnapshot) {
        self.best_snapshot = Some(snap);
    }

    pub fn best_snapshot(&self) -> Option<&ParamSnapshot> {
        self.best_snapshot.as_ref()
    }

    fn emit(&mut self, epoch: usize, kind: EventKind, detail: String) {
        self.events.push(Event {
            epoch,
            kind,
            detail,
        });
    }

    /// Feeds one epoch of dev metrics. Call exactly once per epoch after
    /// validation; a scheduled release must be applied before the next call.
    pub fn observe_epoch(&mut self, metrics: &BTreeMap<String, f64>) -> Result<EpochDecision> {
        if self.finished {
            return Err(Error::Argument(
                "controller already stopped; no decisions after stop".into(),
            ));
        }
        if self.pending.is_some() {
            return Err(Error::Argument(
                "scheduled release was never applied".into(),
            ));
        }
        self.epoch += 1;
        let e = self.epoch;

        // Read and record every monitored metric first; a missing name is a
        // configuration error regardless of phase.
        let mut updates = Vec::with_capacity(self.cfg.metrics.len());
        for (i, spec) in self.cfg.metrics.iter().enumerate() {
            let value = *metrics.get(&spec.name).ok_or_else(|| {
                Error::Config(format!("monitored metric {} missing at epoch {e}", spec.name))
            })?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "metric {} is {value} at epoch {e}",
                    spec.name
                )));
            }
            updates.push(self.histories[i].push(value, spec.direction, self.cfg.window));
        }

        self.new_best_this_epoch = updates[self.primary_idx].new_best;
        if self.new_best_this_epoch {
            let value = *self.histories[self.primary_idx].values.last().unwrap();
            let name = self.cfg.primary.clone();
            self.emit(e, EventKind::NewBest, format!("{name}={value:.6}"));
            self.early_stop_streak = 0;
        }

        let mut decision = EpochDecision::Continue;
        if e <= self.cfg.warmup_epochs {
            if e == self.cfg.warmup_epochs {
                self.emit(e, EventKind::WarmupEnd, format!("epochs={e}"));
            }
        } else if self.cooldown_remaining > 0 {
            self.cooldown_remaining -= 1;
            if self.cooldown_remaining == 0 {
                let c = self.cfg.cooldown;
                self.emit(e, EventKind::CooldownEnd, format!("epochs={c}"));
            }
        } else {
            if !self.new_best_this_epoch {
                self.early_stop_streak += 1;
            }

            let plateau = self
                .cfg
                .metrics
                .iter()
                .zip(&updates)
                .zip(&self.deltas)
                .enumerate()
                .all(|(i, ((_spec, up), &delta))| {
                    let value = *self.histories[i].values.last().unwrap();
                    let within_band = (value - up.smoothed).abs() <= delta;
                    let stalled = match self.cfg.criterion2 {
                        Criterion2::BestImprovement => up.improvement < self.cfg.tau,
                        Criterion2::Smoothed => (value - up.smoothed).abs() <= self.cfg.tau,
                    };
                    within_band && stalled
                });
            if plateau {
                self.plateau_streak += 1;
                let s = self.plateau_streak;
                self.emit(e, EventKind::PlateauTick, format!("streak={s}"));
            } else {
                self.plateau_streak = 0;
            }

            if self.plateau_streak >= self.cfg.patience
                && self.released < self.cfg.releasable_layers
            {
                // Top-down: L_n is released first.
                let layer = self.cfg.releasable_layers - self.released;
                self.pending = Some(layer);
                self.emit(e, EventKind::ReleaseScheduled, format!("L{layer}"));
                decision = EpochDecision::ScheduleRelease(layer);
            } else if self.early_stop_streak >= self.cfg.early_stop_patience {
                self.finished = true;
                let p = self.cfg.early_stop_patience;
                self.emit(e, EventKind::Stop, format!("no_improvement={p}"));
                decision = EpochDecision::Stop;
            }
        }

        self.decay_thresholds();
        Ok(decision)
    }

    /// Applies the Δ decay if the current epoch is a decay point that has
    /// not been applied yet; τ never decays. Safe to call repeatedly.
    pub fn decay_thresholds(&mut self) {
        if self.epoch == 0
            || self.epoch % self.cfg.delta_decay_period != 0
            || self.last_decay_epoch == self.epoch
        {
            return;
        }
        self.last_decay_epoch = self.epoch;
        for d in &mut self.deltas {
            *d *= self.cfg.delta_decay;
        }
    }

    /// State transition for a release taking effect at the start of the
    /// next epoch: starts the cooldown, resets both streaks, clears the
    /// pending marker. Returns the released layer index.
    pub fn mark_release_applied(&mut self) -> Result<usize> {
        let layer = self
            .pending
            .take()
            .ok_or_else(|| Error::Internal("no pending release to apply".into()))?;
        self.released += 1;
        self.cooldown_remaining = self.cfg.cooldown;
        self.plateau_streak = 0;
        self.early_stop_streak = 0;
        self.emit(self.epoch + 1, EventKind::ReleaseApplied, format!("L{layer}"));
        Ok(layer)
    }

    pub fn export_state(&self) -> ControllerState {
        ControllerState {
            epoch: self.epoch,
            plateau_streak: self.plateau_streak,
            early_stop_streak: self.early_stop_streak,
            released: self.released,
            pending: self.pending,
            cooldown_remaining: self.cooldown_remaining,
            finished: self.finished,
            last_decay_epoch: self.last_decay_epoch,
            deltas: self.deltas.clone(),
            metric_values: self.histories.iter().map(|h| h.values.clone()).collect(),
        }
    }

    pub fn import_state(cfg: ControllerConfig, state: &ControllerState) -> Result<Controller> {
        let mut ctrl = Controller::new(cfg)?;
        if state.deltas.len() != ctrl.cfg.metrics.len()
            || state.metric_values.len() != ctrl.cfg.metrics.len()
        {
            return Err(Error::Checkpoint(
                "controller state does not match monitored metric count".into(),
            ));
        }
        for (i, values) in state.metric_values.iter().enumerate() {
            let direction = ctrl.cfg.metrics[i].direction;
            let window = ctrl.cfg.window;
            for &v in values {
                ctrl.histories[i].push(v, direction, window);
            }
        }
        ctrl.deltas = state.deltas.clone();
        ctrl.epoch = state.epoch;
        ctrl.plateau_streak = state.plateau_streak;
        ctrl.early_stop_streak = state.early_stop_streak;
        ctrl.released = state.released;
        ctrl.pending = state.pending;
        ctrl.cooldown_remaining = state.cooldown_remaining;
        ctrl.finished = state.finished;
        ctrl.last_decay_epoch = state.last_decay_epoch;
        Ok(ctrl)
    }
}

/// Alg.-1 release application against a real model: restore the best
/// snapshot, grow the trainable set by exactly one layer, rebuild the
/// optimizer for the new set, enter cooldown.
pub fn apply_pending(
    ctrl: &mut Controller,
    model: &mut Model,
    build_optimizer: impl FnOnce(&Model, &TrainableSet) -> Result<AdamW>,
) -> Result<AdamW> {
    if ctrl.pending_release().is_none() {
        return Err(Error::Internal("no pending release to apply".into()));
    }
    let snap = ctrl
        .best_snapshot()
        .ok_or_else(|| {
            Error::Internal("release pending but no best snapshot recorded".into())
        })?
        .clone();
    model.restore(&snap)?;
    let layer = ctrl.mark_release_applied()?;
    let mut u = model.trainable().clone();
    u.release(layer)?;
    model.set_trainable(u)?;
    build_optimizer(model, model.trainable())
}
