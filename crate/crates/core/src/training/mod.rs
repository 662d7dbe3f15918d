//! Adam, the halving learning-rate schedule with early stopping, the epoch
//! loop and the staged audio-visual and noise-schedule procedures.

mod adam;
mod schedule;
mod staged;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use schedule::{EpochOutcome, LrSchedule};
pub use staged::{
    train_fused_stage, train_noise_schedule, train_single, train_staged_audiovisual, NoiseSchedule, StagePaths,
};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::labels::frame_accuracy;
use crate::layers::Parameterized;
use crate::models::{Example, StageRecord, Trainable};
use crate::numerics::{Rng, RngState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Also evaluate the training split after each epoch.
    pub eval_train: bool,
    /// Parameter-name prefixes (whole dotted components) held fixed.
    pub frozen: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr0: 0.01, decay_factor: 0.5, patience: 5, max_epochs: 50, seed: 0, eval_train: true, frozen: Vec::new() }
    }
}

const TRAIN_KEYS: &[&str] = &["lr0", "decay_factor", "patience", "max_epochs", "seed", "eval_train", "frozen"];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        LrSchedule::new(self.lr0, self.decay_factor, self.patience)?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads keys from `doc`, falling back to the defaults.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        doc.reject_unknown(TRAIN_KEYS, &[])?;
        let d = Self::default();
        let c = TrainConfig {
            lr0: doc.parse_or("lr0", d.lr0)?,
            decay_factor: doc.parse_or("decay_factor", d.decay_factor)?,
            patience: doc.parse_or("patience", d.patience)?,
            max_epochs: doc.parse_or("max_epochs", d.max_epochs)?,
            seed: doc.parse_or("seed", d.seed)?,
            eval_train: doc.parse_or("eval_train", d.eval_train)?,
            frozen: doc.parse_list("frozen")?.unwrap_or_default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "lr0 = {}\ndecay_factor = {}\npatience = {}\nmax_epochs = {}\nseed = {}\neval_train = {}\nfrozen = {}\n",
            self.lr0,
            self.decay_factor,
            self.patience,
            self.max_epochs,
            self.seed,
            self.eval_train,
            if self.frozen.is_empty() { "none".to_string() } else { self.frozen.join(",") }
        )
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub stage: String,
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

/// Per-epoch metrics, written as CSV with columns
/// `stage,epoch,split,loss,accuracy,lr`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stage: &str, epoch: usize, split: &str, loss: f64, accuracy: f64, lr: f64) {
        self.rows.push(MetricsRow { stage: stage.into(), epoch, split: split.into(), loss, accuracy, lr });
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        if self.rows.is_empty() {
            w.write_record(["stage", "epoch", "split", "loss", "accuracy", "lr"]).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>().map_err(|e| Error::Format(e.to_string()))?;
        Ok(MetricsLog { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport<M> {
    pub model: M,
    pub epochs: usize,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub final_lr: f64,
    pub diverged_epochs: usize,
    pub rng_state: RngState,
}

/// Mean loss and midpoint accuracy over a split.
pub fn evaluate_split<M: Trainable>(model: &M, data: &[Example]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let (mut loss, mut preds, mut golds) = (0.0, Vec::new(), Vec::new());
    for ex in data {
        let e = model.evaluate(ex)?;
        loss += e.loss;
        preds.extend(e.predictions);
        golds.extend_from_slice(&ex.labels);
    }
    Ok((loss / data.len() as f64, frame_accuracy(&preds, &golds)?))
}

/// Cross-entropy of always predicting the class frequencies of `train`,
/// measured on `val`.
pub fn prior_baseline_loss<M: Trainable>(model: &M, train: &[Example], val: &[Example], classes: usize) -> f64 {
    let mut counts = vec![1.0; classes];
    for ex in train {
        for &c in model.targets(ex) {
            counts[c.min(classes - 1)] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    let (mut loss, mut n) = (0.0, 0usize);
    for ex in val {
        let t = model.targets(ex);
        loss += t.iter().map(|&c| -(counts[c.min(classes - 1)] / total).ln()).sum::<f64>() / t.len().max(1) as f64;
        n += 1;
    }
    loss / n.max(1) as f64
}

fn zero(grads: &mut impl Parameterized) {
    grads.visit_params_mut("", &mut |_, t| t.data_mut().fill(0.0));
}

fn is_frozen(name: &str, frozen: &[String]) -> bool {
    frozen.iter().any(|p| name == p || name.strip_prefix(p.as_str()).is_some_and(|r| r.starts_with('.')))
}

fn zero_frozen(grads: &mut impl Parameterized, frozen: &[String]) {
    if frozen.is_empty() {
        return;
    }
    grads.visit_params_mut("", &mut |n, t| {
        if is_frozen(&n, frozen) {
            t.data_mut().fill(0.0);
        }
    });
}

/// Trains with batch size 1 in a seeded shuffled order, keeping the model
/// with the best validation loss. An epoch whose loss turns non-finite is
/// abandoned and the best model so far is restored.
pub fn run_epochs<M: Trainable>(
    model: M,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    stage: &str,
    log: &mut MetricsLog,
) -> Result<TrainReport<M>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!("stage `{stage}` needs non-empty train and validation splits")));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut schedule = LrSchedule::new(cfg.lr0, cfg.decay_factor, cfg.patience)?;
    let (initial_val_loss, initial_acc) = evaluate_split(&model, val)?;
    log.push(stage, 0, "val", initial_val_loss, initial_acc, cfg.lr0);
    let mut best = model.clone();
    let mut model = model;
    let mut grads = model.zeros_like();
    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport {
        model: model.clone(),
        epochs: 0,
        best_epoch: 0,
        initial_val_loss,
        best_val_loss: initial_val_loss,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        final_lr: cfg.lr0,
        diverged_epochs: 0,
        rng_state: rng.state(),
    };
    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut diverged = false;
        for &i in &order {
            zero(&mut grads);
            let step = model
                .loss_and_grads(&train[i], &mut grads)
                .and_then(|l| if l.is_finite() { Ok(l) } else { Err(Error::Numeric("loss is not finite".into())) })
                .and_then(|l| {
                    zero_frozen(&mut grads, &cfg.frozen);
                    adam_step(&mut model, &grads, &mut adam, lr).map(|_| l)
                });
            match step {
                Ok(l) => total += l,
                Err(e) if e.is_numeric() => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let (val_loss, val_acc) = if diverged {
            report.diverged_epochs += 1;
            model = best.clone();
            adam = AdamState::new();
            (f64::NAN, f64::NAN)
        } else {
            evaluate_split(&model, val)?
        };
        let train_loss = if diverged { f64::NAN } else { total / train.len() as f64 };
        if cfg.eval_train && !diverged {
            let (tl, ta) = evaluate_split(&model, train)?;
            log.push(stage, epoch, "train", tl, ta, lr);
        } else {
            log.push(stage, epoch, "train", train_loss, f64::NAN, lr);
        }
        log.push(stage, epoch, "val", val_loss, val_acc, lr);
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.val_accuracy.push(val_acc);
        report.epochs = epoch;
        let outcome = schedule.observe(val_loss);
        if outcome.improved {
            best = model.clone();
        }
        if outcome.stop {
            break;
        }
    }
    report.best_epoch = schedule.best_epoch();
    report.best_val_loss = schedule.best().unwrap_or(initial_val_loss);
    if schedule.best().is_none() {
        best = report.model.clone();
    }
    report.model = best;
    report.final_lr = schedule.lr();
    report.rng_state = rng.state();
    Ok(report)
}

impl<M: Trainable> TrainReport<M> {
    pub fn stage_record(&self, name: &str, baseline_loss: f64) -> StageRecord {
        let mut warnings = Vec::new();
        if !(self.best_val_loss < baseline_loss) {
            warnings.push(format!(
                "best validation loss {:.4} did not beat the class-prior baseline {:.4}",
                self.best_val_loss, baseline_loss
            ));
        }
        if self.diverged_epochs > 0 {
            warnings.push(format!("{} epoch(s) diverged and were rolled back", self.diverged_epochs));
        }
        StageRecord {
            name: name.into(),
            epochs: self.epochs,
            initial_val_loss: self.initial_val_loss,
            best_val_loss: self.best_val_loss,
            baseline_loss,
            warnings,
        }
    }
}

#[cfg(test)]
mod tests;
