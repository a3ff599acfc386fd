use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossKind};
use super::{Mode, QNetwork};
use crate::error::{Error, Result};
use crate::rng::{mix, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub loss: LossKind,
    pub seed: u64,
    pub sm_param: f64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 100,
            dropout_rate: 0.0,
            loss: LossKind::CrossEntropy,
            seed: 0,
            sm_param: 0.1,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate must be in [0,1), got {}", self.dropout_rate));
        }
        if !(self.sm_param > 0.0 && self.sm_param <= 1.0) {
            return bad(format!("sm_param must be in (0,1], got {}", self.sm_param));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch size and eval_every must be ≥ 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean minibatch loss in train mode.
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    /// Last epoch of the window.
    pub end_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub val_acc_sm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub windows: Vec<WindowRecord>,
    /// Window whose end produced the returned snapshot.
    pub best_window: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the end of the best window, or the final parameters
    /// when no window completed.
    pub best: QNetwork,
    pub last: QNetwork,
    pub history: History,
}

pub fn accuracy(net: &QNetwork, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let preds = net.predict(x)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Replays the smoothing over the stored window averages. Returns the
/// smoothed sequence and the first index attaining its maximum.
pub fn recompute_selection(history: &History, sm_param: f64) -> (Vec<f64>, Option<usize>) {
    let mut smoothed = Vec::with_capacity(history.windows.len());
    let mut current = 0.0;
    let mut best: Option<usize> = None;
    for (w, rec) in history.windows.iter().enumerate() {
        current = (1.0 - sm_param) * current + sm_param * rec.val_acc;
        smoothed.push(current);
        if best.is_none_or(|b| current > smoothed[b]) {
            best = Some(w);
        }
    }
    (smoothed, best)
}

/// Minibatch SGD on shuffled data. Every `eval_every` epochs the window's
/// mean validation accuracy is folded into the smoothed value (starting at
/// 0) and the parameters are snapshotted whenever it strictly improves.
pub fn train(
    net: &QNetwork,
    train_set: (&Array2<f64>, &[usize]),
    valid_set: (&Array2<f64>, &[usize]),
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (x, y) = train_set;
    let (xv, yv) = valid_set;
    if x.nrows() == 0 || x.nrows() != y.len() || xv.nrows() != yv.len() {
        return Err(Error::InvalidArgument(format!(
            "need a nonempty train set with matching labels; got {}×{} with {} labels, valid {} with {} labels",
            x.nrows(),
            x.ncols(),
            y.len(),
            xv.nrows(),
            yv.len()
        )));
    }
    let mut net = net.clone();
    net.set_dropout_rate(cfg.dropout_rate)?;
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History::default();
    let mut best: Option<QNetwork> = None;
    let mut smoothed = 0.0;
    let mut best_smoothed = f64::NEG_INFINITY;
    let mut step: u64 = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut stream(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let acts = net.forward(&xb, Mode::Train { seed: mix(cfg.seed, step) })?;
            let (loss, grad) = loss_and_grad(cfg.loss, acts.output(), &yb)?;
            if !loss.is_finite() || acts.output().iter().any(|s| !s.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            let grads = net.backward(&acts, &grad)?;
            net.sgd_step(&grads, cfg.learning_rate);
            loss_sum += loss;
            batches += 1;
            step += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            train_acc: accuracy(&net, x, y)?,
            val_acc: accuracy(&net, xv, yv)?,
        });
        if epoch % cfg.eval_every == 0 {
            let window = &history.epochs[epoch - cfg.eval_every..];
            let m = window.len() as f64;
            let val = window.iter().map(|e| e.val_acc).sum::<f64>() / m;
            let tr = window.iter().map(|e| e.train_acc).sum::<f64>() / m;
            smoothed = (1.0 - cfg.sm_param) * smoothed + cfg.sm_param * val;
            history.windows.push(WindowRecord {
                end_epoch: epoch,
                train_acc: tr,
                val_acc: val,
                val_acc_sm: smoothed,
            });
            if smoothed > best_smoothed {
                best_smoothed = smoothed;
                best = Some(net.clone());
                history.best_window = Some(history.windows.len() - 1);
            }
        }
    }
    Ok(TrainOutcome {
        best: best.unwrap_or_else(|| net.clone()),
        last: net,
        history,
    })
}
