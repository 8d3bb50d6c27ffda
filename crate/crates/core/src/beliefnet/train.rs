//! Mini-batch training loop and learning-rate/dropout grid search.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hmm::{dataset_loss, HmmParams, SequenceDataset};
use crate::rng;

use super::{adamw_step, batch_gradient, LogitParams, OptimizerState};

const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    pub lr: f64,
    pub dropout: f64,
    pub val_every: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Standard deviation of the Normal logit initialization.
    pub init_std: f64,
    /// Cosine decay of the learning rate from `lr` to 0 over `max_iters`.
    pub cosine: bool,
    /// Stop after this many validation checks without improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 10,
            max_iters: 2000,
            lr: 0.01,
            dropout: 0.0,
            val_every: 50,
            seed: 0,
            weight_decay: 0.01,
            init_std: 0.1,
            cosine: false,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.val_every == 0 {
            return Err(Error::InvalidConfig("val_every must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || self.init_std < 0.0 {
            return Err(Error::InvalidConfig(
                "weight_decay and init_std must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn lr_at(&self, iter: usize) -> f64 {
        if self.cosine && self.max_iters > 0 {
            0.5 * self.lr * (1.0 + (PI * iter as f64 / self.max_iters as f64).cos())
        } else {
            self.lr
        }
    }
}

/// `(iteration, loss)` pairs; iterations are 1-based and strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurves {
    pub training: Vec<(usize, f64)>,
    pub validation: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HmmParams,
    pub logits: LogitParams,
    pub curves: LossCurves,
    /// Validation loss of the returned parameters.
    pub final_val_loss: f64,
    pub iterations: usize,
}

/// Trains logits for a `d`-state model on `data` and reports validation losses on `val`.
pub fn train(data: &SequenceDataset, d: usize, cfg: &TrainConfig, val: &SequenceDataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    if d == 0 {
        return Err(Error::InvalidConfig("d must be at least 1".into()));
    }
    let m = data.m();
    if val.m() != m {
        return Err(Error::VocabMismatch {
            model: m,
            data: val.m(),
        });
    }
    let usable: Vec<&[usize]> = data
        .sequences()
        .iter()
        .filter(|s| s.len() >= 2)
        .map(Vec::as_slice)
        .collect();
    if usable.is_empty() {
        return Err(Error::NoPredictionTargets);
    }

    let mut logits = LogitParams::random(d, m, cfg.init_std, &mut rng::stream(cfg.seed, STREAM_INIT));
    let mut opt = OptimizerState::new(d, m, cfg.lr, cfg.weight_decay);
    let mut batch_rng = rng::stream(cfg.seed, STREAM_BATCH);
    let mut dropout_rng = rng::stream(cfg.seed, STREAM_DROPOUT);
    let mut curves = LossCurves::default();
    let mut best_val = f64::INFINITY;
    let mut stale = 0;
    let mut iterations = 0;

    let mut batch = Vec::with_capacity(cfg.batch_size);
    for iter in 1..=cfg.max_iters {
        batch.clear();
        for _ in 0..cfg.batch_size {
            batch.push(usable[batch_rng.random_range(0..usable.len())]);
        }
        let (loss, grad) = batch_gradient(&logits, &batch, cfg.dropout, &mut dropout_rng)?;
        opt.lr = cfg.lr_at(iter - 1);
        adamw_step(&mut logits, &grad, &mut opt)?;
        curves.training.push((iter, loss));
        iterations = iter;

        if iter % cfg.val_every == 0 {
            let v = dataset_loss(&logits.to_probs(), val)?;
            curves.validation.push((iter, v));
            if v < best_val {
                best_val = v;
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
    }

    let params = logits.to_probs();
    let final_val_loss = match curves.validation.last() {
        Some(&(it, v)) if it == iterations => v,
        _ => dataset_loss(&params, val)?,
    };
    Ok(TrainOutcome {
        params,
        logits,
        curves,
        final_val_loss,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub lr: f64,
    pub dropout: f64,
    pub final_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: TrainOutcome,
    pub config: TrainConfig,
    pub runs: Vec<GridRun>,
}

/// Trains one model per `(lr, dropout)` pair and keeps the lowest final
/// validation loss; ties go to the lower `lr`, then the lower `dropout`.
pub fn grid_search(
    data: &SequenceDataset,
    d: usize,
    lrs: &[f64],
    dropouts: &[f64],
    base: &TrainConfig,
    val: &SequenceDataset,
) -> Result<GridOutcome> {
    if lrs.is_empty() || dropouts.is_empty() {
        return Err(Error::InvalidConfig(
            "grid search needs at least one lr and one dropout".into(),
        ));
    }
    let configs: Vec<TrainConfig> = lrs
        .iter()
        .flat_map(|&lr| {
            dropouts.iter().map(move |&dropout| TrainConfig {
                lr,
                dropout,
                ..base.clone()
            })
        })
        .collect();
    let outcomes = configs
        .par_iter()
        .map(|cfg| train(data, d, cfg, val))
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<GridRun> = configs
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| GridRun {
            lr: c.lr,
            dropout: c.dropout,
            final_val_loss: o.final_val_loss,
        })
        .collect();
    let best = (0..runs.len())
        .min_by(|&i, &j| {
            let (a, b) = (&runs[i], &runs[j]);
            a.final_val_loss
                .total_cmp(&b.final_val_loss)
                .then(a.lr.total_cmp(&b.lr))
                .then(a.dropout.total_cmp(&b.dropout))
        })
        .expect("nonempty grid");
    let config = configs[best].clone();
    let best = outcomes.into_iter().nth(best).expect("index in range");
    Ok(GridOutcome { best, config, runs })
}
