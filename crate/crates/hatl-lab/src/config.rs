//! Plain-text `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key must be consumed by the reader: unknown keys are errors (typo
//! safety), duplicate keys are errors, and malformed values report the file
//! and line. [`RunConfig`] carries every training/decoding hyperparameter
//! with the experiment defaults; [`DatasetSpec`](crate::data::DatasetSpec)
//! reads generation parameters from the same format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::controller::{ControllerConfig, Criterion2, Direction, MonitoredMetric};
use crate::data::DatasetSpec;
use crate::decode::BeamConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::optim::OptimConfig;

/// Ordered `key = value` file with consumed-key tracking.
#[derive(Debug, Clone)]
pub struct KvReader {
    file: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvReader {
    pub fn from_path(path: &Path) -> Result<KvReader> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_str(&content, &path.display().to_string())
    }

    pub fn from_str(content: &str, file: &str) -> Result<KvReader> {
        let mut entries = BTreeMap::new();
        for (i, raw) in content.lines().enumerate() {
            let line = i + 1;
            let text = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if text.is_empty() {
                continue;
            }
            let Some(eq) = text.find('=') else {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line,
                    msg: format!("expected `key = value`, got {text:?}"),
                });
            };
            let key = text[..eq].trim().to_string();
            let value = text[eq + 1..].trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line,
                    msg: "empty key or value".into(),
                });
            }
            if entries.insert(key.clone(), (line, value)).is_some() {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(KvReader {
            file: file.to_string(),
            entries,
        })
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str, default: T, kind: &str) -> Result<T> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some((line, value)) => value.parse::<T>().map_err(|_| Error::Config(format!(
                "{}:{line}: key {key} expects {kind}, got {value:?}",
                self.file
            ))),
        }
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        self.take_parsed(key, default, "an unsigned integer")
    }

    pub fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        self.take_parsed(key, default, "an unsigned integer")
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        self.take_parsed(key, default, "a number")
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Errors on any key that was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(Error::Config(format!(
                "{}:{line}: unknown key {key:?}",
                self.file
            )));
        }
        Ok(())
    }
}

impl DatasetSpec {
    /// Reads a generation spec, filling gaps with the defaults.
    pub fn from_kv(kv: &mut KvReader) -> Result<DatasetSpec> {
        let d = DatasetSpec::default();
        let spec = DatasetSpec {
            v_gloss: kv.take_usize("v_gloss", d.v_gloss)?,
            v_text: kv.take_usize("v_text", d.v_text)?,
            d_in: kv.take_usize("d_in", d.d_in)?,
            pretrain_samples: kv.take_usize("pretrain_samples", d.pretrain_samples)?,
            train_samples: kv.take_usize("train_samples", d.train_samples)?,
            dev_samples: kv.take_usize("dev_samples", d.dev_samples)?,
            test_samples: kv.take_usize("test_samples", d.test_samples)?,
            min_gloss_len: kv.take_usize("min_gloss_len", d.min_gloss_len)?,
            max_gloss_len: kv.take_usize("max_gloss_len", d.max_gloss_len)?,
            min_duration: kv.take_usize("min_duration", d.min_duration)?,
            max_duration: kv.take_usize("max_duration", d.max_duration)?,
            sigma: kv.take_f64("sigma", d.sigma)?,
            rotation_deg: kv.take_f64("rotation_deg", d.rotation_deg)?,
            remap_fraction: kv.take_f64("remap_fraction", d.remap_fraction)?,
            seed: kv.take_u64("seed", d.seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<DatasetSpec> {
        let mut kv = KvReader::from_path(path)?;
        let spec = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Classical,
    Full,
    Hatl,
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Regime> {
        match s {
            "classical" => Ok(Regime::Classical),
            "full" => Ok(Regime::Full),
            "hatl" => Ok(Regime::Hatl),
            other => Err(Error::Argument(format!(
                "unknown regime {other:?} (expected classical|full|hatl)"
            ))),
        }
    }
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Classical => "classical",
            Regime::Full => "full",
            Regime::Hatl => "hatl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Direct sign-to-text: no gloss supervision, CTC weight forced to 0.
    S2t,
    /// Gloss-supervised: CTC on the encoder gloss head plus text loss.
    S2g2t,
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Task> {
        match s {
            "s2t" => Ok(Task::S2t),
            "s2g2t" => Ok(Task::S2g2t),
            other => Err(Error::Argument(format!(
                "unknown task {other:?} (expected s2t|s2g2t)"
            ))),
        }
    }
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::S2t => "s2t",
            Task::S2g2t => "s2g2t",
        }
    }
}

/// Every experiment hyperparameter with its default value; a config file
/// overrides individual keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub max_epochs: usize,
    pub batch_size: usize,

    pub d_model: usize,
    pub n_backbone: usize,
    pub n_encoder: usize,
    pub n_decoder: usize,

    pub loss: LossWeights,
    pub optim: OptimConfig,

    pub warmup_epochs: usize,
    pub window: usize,
    pub patience: usize,
    pub cooldown: usize,
    pub early_stop: usize,
    pub tau: f64,
    pub delta_ctc: f64,
    pub delta_bleu: f64,
    pub delta_decay: f64,
    pub delta_decay_period: usize,
    pub criterion2: Criterion2,

    pub beam_width: usize,
    pub lm_weight: f64,
    pub blank_bias: f64,
    pub temperature: f64,
    /// 0 = derive from the dataset's longest text.
    pub max_decode_len: usize,
    pub lm_order: usize,

    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_patience: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            seed: 1,
            max_epochs: 20,
            batch_size: 8,
            d_model: 16,
            n_backbone: 4,
            n_encoder: 3,
            n_decoder: 1,
            loss: LossWeights::defaults(),
            optim: OptimConfig::default(),
            warmup_epochs: 2,
            window: 3,
            patience: 4,
            cooldown: 3,
            early_stop: 5,
            tau: 0.002,
            delta_ctc: 0.003,
            delta_bleu: 0.002,
            delta_decay: 0.95,
            delta_decay_period: 5,
            criterion2: Criterion2::BestImprovement,
            beam_width: 8,
            lm_weight: 0.7,
            blank_bias: 0.4,
            temperature: 0.9,
            max_decode_len: 0,
            lm_order: 4,
            pretrain_epochs: 30,
            pretrain_lr: 0.003,
            pretrain_patience: 3,
        }
    }
}

impl RunConfig {
    pub fn from_kv(kv: &mut KvReader) -> Result<RunConfig> {
        let d = RunConfig::default();
        let criterion2 = match kv.take_string("criterion2") {
            None => d.criterion2,
            Some(v) => match v.as_str() {
                "best_improvement" => Criterion2::BestImprovement,
                "smoothed" => Criterion2::Smoothed,
                other => {
                    return Err(Error::Config(format!(
                        "criterion2 must be best_improvement or smoothed, got {other:?}"
                    )))
                }
            },
        };
        let clip_norm = match kv.take_f64("clip_norm", 0.0)? {
            v if v == 0.0 => None,
            v if v > 0.0 => Some(v),
            v => {
                return Err(Error::Config(format!(
                    "clip_norm must be positive or 0 to disable, got {v}"
                )))
            }
        };
        let cfg = RunConfig {
            data_dir: kv.take_string("data_dir").map(PathBuf::from),
            seed: kv.take_u64("seed", d.seed)?,
            max_epochs: kv.take_usize("max_epochs", d.max_epochs)?,
            batch_size: kv.take_usize("batch_size", d.batch_size)?,
            d_model: kv.take_usize("d_model", d.d_model)?,
            n_backbone: kv.take_usize("n_backbone", d.n_backbone)?,
            n_encoder: kv.take_usize("n_encoder", d.n_encoder)?,
            n_decoder: kv.take_usize("n_decoder", d.n_decoder)?,
            loss: LossWeights {
                ctc: kv.take_f64("w_ctc", d.loss.ctc)?,
                ce: kv.take_f64("w_ce", d.loss.ce)?,
                enc: kv.take_f64("w_enc", d.loss.enc)?,
                bb: kv.take_f64("w_bb", d.loss.bb)?,
            },
            optim: OptimConfig {
                lr_encoder: kv.take_f64("lr_encoder", d.optim.lr_encoder)?,
                lr_decoder: kv.take_f64("lr_decoder", d.optim.lr_decoder)?,
                lr_backbone_top: kv.take_f64("lr_backbone", d.optim.lr_backbone_top)?,
                llrd_alpha: kv.take_f64("llrd_alpha", d.optim.llrd_alpha)?,
                beta1: kv.take_f64("beta1", d.optim.beta1)?,
                beta2: kv.take_f64("beta2", d.optim.beta2)?,
                eps: kv.take_f64("eps", d.optim.eps)?,
                weight_decay: kv.take_f64("weight_decay", d.optim.weight_decay)?,
                clip_norm,
            },
            warmup_epochs: kv.take_usize("warmup_epochs", d.warmup_epochs)?,
            window: kv.take_usize("window", d.window)?,
            patience: kv.take_usize("patience", d.patience)?,
            cooldown: kv.take_usize("cooldown", d.cooldown)?,
            early_stop: kv.take_usize("early_stop", d.early_stop)?,
            tau: kv.take_f64("tau", d.tau)?,
            delta_ctc: kv.take_f64("delta_ctc", d.delta_ctc)?,
            delta_bleu: kv.take_f64("delta_bleu", d.delta_bleu)?,
            delta_decay: kv.take_f64("delta_decay", d.delta_decay)?,
            delta_decay_period: kv.take_usize("delta_decay_period", d.delta_decay_period)?,
            criterion2,
            beam_width: kv.take_usize("beam_width", d.beam_width)?,
            lm_weight: kv.take_f64("lm_weight", d.lm_weight)?,
            blank_bias: kv.take_f64("blank_bias", d.blank_bias)?,
            temperature: kv.take_f64("temperature", d.temperature)?,
            max_decode_len: kv.take_usize("max_decode_len", d.max_decode_len)?,
            lm_order: kv.take_usize("lm_order", d.lm_order)?,
            pretrain_epochs: kv.take_usize("pretrain_epochs", d.pretrain_epochs)?,
            pretrain_lr: kv.take_f64("pretrain_lr", d.pretrain_lr)?,
            pretrain_patience: kv.take_usize("pretrain_patience", d.pretrain_patience)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let mut kv = KvReader::from_path(path)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.n_backbone == 0 || self.n_encoder == 0 || self.n_decoder == 0 {
            return Err(Error::Config("layer counts must be >= 1".into()));
        }
        if self.d_model == 0 {
            return Err(Error::Config("d_model must be >= 1".into()));
        }
        if self.lm_order == 0 {
            return Err(Error::Config("lm_order must be >= 1".into()));
        }
        if self.pretrain_epochs == 0 {
            return Err(Error::Config("pretrain_epochs must be >= 1".into()));
        }
        if !(self.pretrain_lr > 0.0) {
            return Err(Error::Config("pretrain_lr must be positive".into()));
        }
        self.loss.validate()?;
        Ok(())
    }

    /// Effective loss weights: the text-only task disables CTC entirely.
    pub fn loss_weights_for(&self, task: Task) -> LossWeights {
        match task {
            Task::S2t => LossWeights {
                ctc: 0.0,
                ..self.loss
            },
            Task::S2g2t => self.loss,
        }
    }

    /// Controller wired for the task's monitored metrics; `releasable`
    /// is the number of backbone layers the regime may unfreeze.
    pub fn controller_config(&self, task: Task, releasable: usize) -> ControllerConfig {
        let mut metrics = Vec::new();
        if task == Task::S2g2t {
            metrics.push(MonitoredMetric {
                name: "dev_ctc".into(),
                direction: Direction::Minimize,
                delta: self.delta_ctc,
            });
        }
        metrics.push(MonitoredMetric {
            name: "dev_bleu4".into(),
            direction: Direction::Maximize,
            delta: self.delta_bleu,
        });
        ControllerConfig {
            metrics,
            primary: "dev_bleu4".into(),
            tau: self.tau,
            window: self.window,
            warmup_epochs: self.warmup_epochs,
            patience: self.patience,
            cooldown: self.cooldown,
            early_stop_patience: self.early_stop,
            delta_decay: self.delta_decay,
            delta_decay_period: self.delta_decay_period,
            releasable_layers: releasable,
            criterion2: self.criterion2,
        }
    }

    pub fn beam_config(&self, max_len: usize) -> BeamConfig {
        BeamConfig {
            width: self.beam_width,
            lm_weight: self.lm_weight,
            max_len,
            blank_bias: self.blank_bias,
            temperature: self.temperature,
        }
    }
}
