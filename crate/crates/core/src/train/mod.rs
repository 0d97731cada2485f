//! Training: smooth-L1 regression on normalized labels with Adam, per-epoch
//! validation FE and best-checkpoint selection.

mod adam;
mod augment;
mod loss;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::PatchSample;
use crate::eval::{compute_fe, predict_samples};
use crate::nn::{save_weights, FocusModel, NormalizationStats};
use crate::{seed, Error, Result};

pub use adam::{Adam, AdamConfig};
pub use augment::{augment, channel_stats, AugmentConfig, Augmented};
pub use loss::{smooth_l1, smooth_l1_grad};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub optimizer: String,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Transition point of the loss, in normalized label units.
    pub smooth_l1_beta: f64,
    /// Labels are divided by this before the loss. `None` uses the largest
    /// absolute training label.
    pub label_scale_um: Option<f64>,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 8e-4,
            weight_decay: 0.006,
            epochs: 100,
            optimizer: "adam".into(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            smooth_l1_beta: 0.1,
            label_scale_um: None,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.optimizer != "adam" {
            return Err(Error::Config(format!(
                "unsupported optimizer {:?} (only \"adam\")",
                self.optimizer
            )));
        }
        if !(self.smooth_l1_beta > 0.0) {
            return Err(Error::Config("smooth_l1_beta must be positive".into()));
        }
        if let Some(s) = self.label_scale_um {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("label_scale_um must be positive".into()));
            }
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean smooth-L1 loss (normalized units). Epoch 0 scores the initial
    /// weights on the un-augmented training set.
    pub train_loss: f64,
    /// Patch-level validation FE in µm.
    pub val_fe_um: f64,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_fe_um";

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_fe_um));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FocusModel,
    pub epoch: usize,
    pub val_fe_um: f64,
    pub train_loss: f64,
    /// Seed that drives the shuffle and augmentation of the next epoch.
    pub rng_state: u64,
}

/// Contents of the pointer file written next to the weight files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointPointer {
    pub best: String,
    pub best_epoch: usize,
    pub best_val_fe_um: f64,
    pub latest: String,
    pub latest_epoch: usize,
}

pub const BEST_WEIGHTS: &str = "best.spfw";
pub const LATEST_WEIGHTS: &str = "latest.spfw";
pub const CHECKPOINT_POINTER: &str = "checkpoint.json";
pub const HISTORY_CSV: &str = "history.csv";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub latest: Checkpoint,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn best_epoch(&self) -> usize {
        self.best.epoch
    }
}

/// Resolves a pointer file (or a directory holding one) to the best weights.
/// A weights file is returned unchanged.
pub fn resolve_best_weights(path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    if path.is_file() && is_weights_file(path) {
        return Ok(path.to_path_buf());
    }
    let pointer_path = if path.is_dir() { path.join(CHECKPOINT_POINTER) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&pointer_path).map_err(|e| Error::load(&pointer_path, e.to_string()))?;
    let pointer: CheckpointPointer =
        serde_json::from_str(&text).map_err(|e| Error::load(&pointer_path, e.to_string()))?;
    Ok(pointer_path.parent().unwrap_or(Path::new(".")).join(pointer.best))
}

fn is_weights_file(path: &Path) -> bool {
    use std::io::Read;
    let mut magic = [0u8; 8];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .is_ok_and(|_| &magic == crate::nn::weights::MAGIC)
}

/// Configured training run.
pub struct Trainer<'a> {
    config: TrainConfig,
    out_dir: Option<PathBuf>,
    on_epoch: Option<Box<dyn FnMut(&EpochRecord) + 'a>>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            config,
            out_dir: None,
            on_epoch: None,
        }
    }

    /// Writes weights, history and the pointer file here after every epoch.
    pub fn out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn on_epoch(mut self, f: impl FnMut(&EpochRecord) + 'a) -> Self {
        self.on_epoch = Some(Box::new(f));
        self
    }

    pub fn run(mut self, mut model: FocusModel, train: &[PatchSample], val: &[PatchSample]) -> Result<TrainOutcome> {
        let cfg = self.config.clone();
        cfg.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Config("training and validation sets must be non-empty".into()));
        }
        let label_scale_um = match cfg.label_scale_um {
            Some(s) => s,
            None => train.iter().map(|s| s.z_label_um.abs()).fold(0.0, f64::max).max(1e-6),
        };
        let (mean, std) = channel_stats(train);
        let stats = NormalizationStats {
            label_scale_um,
            mean,
            std,
        };
        model.set_normalization(stats.clone())?;
        if let Some(dir) = &self.out_dir {
            std::fs::create_dir_all(dir)?;
        }

        let plain = AugmentConfig::disabled();
        let initial_loss = {
            let mut acc = 0.0;
            for s in train {
                let a = augment(s, &stats, &plain, 0);
                acc += smooth_l1(model.forward(&a.input), a.z_label_um / label_scale_um, cfg.smooth_l1_beta)?;
            }
            acc / train.len() as f64
        };
        let mut history = vec![EpochRecord {
            epoch: 0,
            train_loss: initial_loss,
            val_fe_um: val_fe(&model, val)?,
        }];
        let snapshot = |model: &FocusModel, rec: &EpochRecord| Checkpoint {
            model: model.clone(),
            epoch: rec.epoch,
            val_fe_um: rec.val_fe_um,
            train_loss: rec.train_loss,
            rng_state: seed::derive(cfg.seed, &[rec.epoch as u64 + 1]),
        };
        let mut best = snapshot(&model, &history[0]);
        self.emit(&history[0], &best, &best, &history)?;

        let mut adam = Adam::new(cfg.adam(), model.params());
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=cfg.epochs {
            order.sort_unstable();
            order.shuffle(&mut seed::rng(cfg.seed, &[epoch as u64, 0x5f]));
            let mut loss_sum = 0.0;
            for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let mut grads = model.params().zero_grads();
                let mut batch_loss = 0.0;
                for &i in chunk {
                    let a = augment(
                        &train[i],
                        &stats,
                        &cfg.augment,
                        seed::derive(cfg.seed, &[epoch as u64, i as u64]),
                    );
                    let target = a.z_label_um / label_scale_um;
                    let (out, cache) = model.forward_cached(&a.input);
                    batch_loss += smooth_l1(out, target, cfg.smooth_l1_beta)?;
                    model.backward(&cache, smooth_l1_grad(out, target, cfg.smooth_l1_beta)?, &mut grads);
                }
                let n = chunk.len() as f64;
                grads.scale(1.0 / n);
                if !batch_loss.is_finite() || !grads.is_finite() {
                    let rec = EpochRecord {
                        epoch,
                        train_loss: batch_loss / n,
                        val_fe_um: f64::NAN,
                    };
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch,
                        checkpoint: Box::new(snapshot(&model, &rec)),
                    });
                }
                adam.step(model.params_mut(), &grads);
                loss_sum += batch_loss;
            }
            let rec = EpochRecord {
                epoch,
                train_loss: loss_sum / train.len() as f64,
                val_fe_um: val_fe(&model, val)?,
            };
            history.push(rec);
            let latest = snapshot(&model, &rec);
            if rec.val_fe_um < best.val_fe_um {
                best = latest.clone();
            }
            self.emit(&rec, &best, &latest, &history)?;
        }
        let latest = snapshot(&model, history.last().expect("history has epoch 0"));
        Ok(TrainOutcome { best, latest, history })
    }

    fn emit(&mut self, rec: &EpochRecord, best: &Checkpoint, latest: &Checkpoint, history: &[EpochRecord]) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            save_weights(&latest.model, dir.join(LATEST_WEIGHTS))?;
            if best.epoch == latest.epoch {
                save_weights(&best.model, dir.join(BEST_WEIGHTS))?;
            }
            std::fs::write(dir.join(HISTORY_CSV), history_to_csv(history))?;
            let pointer = CheckpointPointer {
                best: BEST_WEIGHTS.into(),
                best_epoch: best.epoch,
                best_val_fe_um: best.val_fe_um,
                latest: LATEST_WEIGHTS.into(),
                latest_epoch: latest.epoch,
            };
            let mut text = serde_json::to_string_pretty(&pointer)?;
            text.push('\n');
            std::fs::write(dir.join(CHECKPOINT_POINTER), text)?;
        }
        if let Some(f) = self.on_epoch.as_mut() {
            f(rec);
        }
        Ok(())
    }
}

/// Convenience wrapper around [`Trainer`] without file output.
pub fn train(model: FocusModel, train: &[PatchSample], val: &[PatchSample], config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(config.clone()).run(model, train, val)
}

fn val_fe(model: &FocusModel, val: &[PatchSample]) -> Result<f64> {
    Ok(compute_fe(&predict_samples(model, val)?)?.0)
}
