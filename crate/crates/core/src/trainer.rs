//! Mini-batch Adam training with patience-based early stopping.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataprep::Dataset;
use crate::error::{Error, Result};
use crate::ip_layer::GraphLayout;
use crate::metrics::MetricsReport;
use crate::model::{GraphPineModel, Mode};
use crate::nn::{adam_step, AdamConfig, Gradients};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            patience: 30,
            min_delta: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch_size and patience must be at least 1".into(),
            ));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return Err(Error::Config(format!("min_delta = {} is negative", self.min_delta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr = {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

/// One line of the training log. Epochs count from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
    pub patience_counter: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: Option<StopReason>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn best_epoch(&self) -> Option<usize> {
        self.records.last().map(|r| r.best_epoch)
    }

    pub fn stop_epoch(&self) -> Option<usize> {
        self.records.last().map(|r| r.epoch)
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.records.last().and_then(|r| r.stop_reason)
    }

    /// One compact JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("plain data"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Patience counter: an epoch improves when `best − val ≥ min_delta`,
/// measured against the best loss so far.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    counter: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            counter: patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Updates the counter and returns the log record for `epoch`.
    pub fn observe(&mut self, epoch: usize, train_loss: f64, val_loss: f64, last_epoch: bool) -> EpochRecord {
        let improved = self.best - val_loss >= self.min_delta;
        if improved {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.counter = self.patience;
        } else {
            self.counter -= 1;
        }
        let stop_reason = if self.counter == 0 {
            Some(StopReason::Patience)
        } else if last_epoch {
            Some(StopReason::MaxEpochs)
        } else {
            None
        };
        EpochRecord {
            epoch,
            train_loss,
            val_loss,
            improved,
            patience_counter: self.counter,
            best_epoch: self.best_epoch,
            best_val_loss: self.best,
            stop_reason,
        }
    }
}

/// Runs the stopping rule over a fixed sequence of validation losses.
pub fn replay_validation_losses(cfg: &TrainConfig, val_losses: &[f64]) -> TrainLog {
    let mut es = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let epochs = cfg.epochs.min(val_losses.len());
    let mut log = TrainLog::default();
    for (i, &v) in val_losses.iter().take(epochs).enumerate() {
        let rec = es.observe(i + 1, 0.0, v, i + 1 == epochs);
        let stop = rec.stop_reason.is_some();
        log.records.push(rec);
        if stop {
            break;
        }
    }
    log
}

/// Dropout seed for sample `index` in `epoch`.
pub fn dropout_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed ^ (epoch as u64).rotate_left(32) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_graphs(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.graph.node_count() != b.graph.node_count() {
        return Err(Error::dims(
            "validation graph nodes",
            a.graph.node_count(),
            b.graph.node_count(),
        ));
    }
    Ok(())
}

/// Trains and returns the parameters from the epoch with the lowest
/// validation loss.
pub fn train(
    model: &GraphPineModel,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(GraphPineModel, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set".into()));
    }
    check_graphs(train_set, val_set)?;
    let layout = GraphLayout::new(&train_set.graph);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut current = model.clone();
    let mut best = model.clone();
    let mut es = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Gradients)>> = batch
                .par_iter()
                .map(|&i| {
                    let mode = Mode::Train {
                        seed: dropout_seed(cfg.seed, epoch, i),
                    };
                    current.sample_gradients(&train_set.samples[i], &layout, mode)
                })
                .collect();
            let mut acc = Gradients::zeros_like(&current.params);
            for r in results {
                let (loss, g) = r.map_err(|e| match e {
                    Error::NonFiniteLoss(loss) => Error::DivergedLoss { epoch, loss },
                    other => other,
                })?;
                loss_sum += loss;
                acc.add_assign(&g)?;
            }
            acc.scale(1.0 / batch.len() as f64);
            if !acc.is_finite() {
                return Err(Error::DivergedLoss { epoch, loss: f64::NAN });
            }
            adam_step(&mut current.params, &acc, &adam)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = mean_loss(&current, val_set, &layout)?;
        for loss in [train_loss, val_loss] {
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch, loss });
            }
        }
        let rec = es.observe(epoch, train_loss, val_loss, epoch == cfg.epochs);
        if rec.improved {
            best = current.clone();
        }
        let stop = rec.stop_reason.is_some();
        log.records.push(rec);
        if stop {
            break;
        }
    }
    Ok((best, log))
}

/// Inference-mode predictions for every sample, in dataset order.
pub fn predict_all(
    model: &GraphPineModel,
    data: &Dataset,
    layout: &GraphLayout,
) -> Result<Vec<crate::model::Prediction>> {
    data.samples.par_iter().map(|s| model.predict(s, layout)).collect()
}

fn mean_loss(model: &GraphPineModel, data: &Dataset, layout: &GraphLayout) -> Result<f64> {
    let preds = predict_all(model, data, layout)?;
    let total: f64 = preds
        .iter()
        .zip(&data.samples)
        .map(|(p, s)| model.loss(p, s.label))
        .sum();
    Ok(total / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub metrics: MetricsReport,
    pub probs: Vec<f64>,
}

pub fn evaluate(model: &GraphPineModel, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let layout = GraphLayout::new(&data.graph);
    let preds = predict_all(model, data, &layout)?;
    let total: f64 = preds
        .iter()
        .zip(&data.samples)
        .map(|(p, s)| model.loss(p, s.label))
        .sum();
    let probs: Vec<f64> = preds.iter().map(|p| p.prob).collect();
    Ok(Evaluation {
        mean_loss: total / data.len() as f64,
        metrics: MetricsReport::from_scores(&data.labels(), &probs)?,
        probs,
    })
}
