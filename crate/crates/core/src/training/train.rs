use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{joint_loss, joint_loss_grad};
use super::optim::{clip_grad_norm, Adam};
use crate::datastore::WindowSample;
use crate::error::{Error, Result};
use crate::model::{CtxGat, ModelConfig, ModelParams};

/// Windows per parallel work unit. Gradients are summed inside a chunk in
/// window order and chunk sums are reduced in chunk order, so results do not
/// depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            seed: 0,
            patience: 10,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch_size and patience must be >= 1".into(),
            ));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.learning_rate)
            || !finite_nonneg(self.weight_decay)
            || !finite_nonneg(self.clip_norm)
        {
            return Err(Error::Config(
                "learning_rate, weight_decay and clip_norm must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean joint loss over the epoch's minibatches.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Joint loss of the initial parameters over the training windows.
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept; 0 means the initial parameters.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_train_loss, |e| e.train_loss)
    }
}

pub struct TrainOutcome {
    pub model: CtxGat<f32>,
    pub history: TrainHistory,
}

/// Initializes a model from `config.seed` and trains it.
pub fn train(
    train_windows: &[WindowSample<f32>],
    val_windows: &[WindowSample<f32>],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = CtxGat::init(model_config.clone(), config.seed)?;
    train_model(model, train_windows, val_windows, config)
}

/// Minimizes the joint loss with Adam. With validation windows the
/// parameters of the best validation epoch are returned and training stops
/// after `patience` epochs without improvement; without them the final
/// parameters are returned.
pub fn train_model(
    mut model: CtxGat<f32>,
    train_windows: &[WindowSample<f32>],
    val_windows: &[WindowSample<f32>],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_windows.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut opt = Adam::new(model.params(), config.learning_rate, config.weight_decay);

    let initial_train_loss = dataset_loss(&model, train_windows)?;
    let initial_val_loss = if val_windows.is_empty() {
        None
    } else {
        Some(dataset_loss(&model, val_windows)?)
    };
    if !initial_train_loss.is_finite() {
        return Err(Error::Diverged(format!(
            "initial training loss is {initial_train_loss}"
        )));
    }
    info!(
        "training {} windows ({} validation), {} parameters, initial loss {initial_train_loss:.6}",
        train_windows.len(),
        val_windows.len(),
        model.param_count()
    );
    let mut history = TrainHistory {
        initial_train_loss,
        initial_val_loss,
        ..Default::default()
    };
    let mut best: Option<(f64, ModelParams<f32>)> = initial_val_loss.map(|l| (l, model.params().clone()));
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (batch_loss, mut grads) = batch_gradient(&model, train_windows, batch)?;
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}, batch {b}: loss {batch_loss}"
                )));
            }
            let norm = clip_grad_norm(&mut grads, config.clip_norm);
            debug!("epoch {epoch} batch {b}: loss {batch_loss:.6} grad norm {norm:.4}");
            opt.update(model.params_mut(), &grads);
            loss_sum += batch_loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_windows.len() as f64;
        let val_loss = match best {
            Some(_) => Some(dataset_loss(&model, val_windows)?),
            None => None,
        };
        info!(
            "epoch {epoch}: train {train_loss:.6}{}",
            val_loss.map_or(String::new(), |v| format!(" val {v:.6}"))
        );
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if let (Some(v), Some((best_loss, best_params))) = (val_loss, best.as_mut()) {
            if v < *best_loss {
                *best_loss = v;
                *best_params = model.params().clone();
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    info!("early stop after epoch {epoch}; best epoch {}", history.best_epoch);
                    history.stopped_early = true;
                    break;
                }
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(TrainOutcome { model, history })
}

fn window_loss(model: &CtxGat<f32>, w: &WindowSample<f32>) -> Result<f64> {
    let out = model.forward(w.input.view(), &w.context)?;
    let loss = joint_loss(
        out.forecast.view(),
        out.reconstruction.view(),
        w.target.view(),
        w.input.view(),
        Some(w.target_observed.view()),
        Some(w.input_observed.view()),
    )?;
    Ok(loss as f64)
}

/// Mean joint loss over `windows`.
pub fn dataset_loss(model: &CtxGat<f32>, windows: &[WindowSample<f32>]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::invalid("no windows to evaluate"));
    }
    let sums = windows
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|w| window_loss(model, w))
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.iter().sum::<f64>() / windows.len() as f64)
}

/// Mean loss and mean gradient over the windows selected by `batch`.
fn batch_gradient(
    model: &CtxGat<f32>,
    windows: &[WindowSample<f32>],
    batch: &[usize],
) -> Result<(f64, ModelParams<f32>)> {
    let partials = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.params().zeros_like();
            let mut loss = 0.0;
            for &i in chunk {
                let w = &windows[i];
                let (out, cache) = model.forward_cached(w.input.view(), &w.context)?;
                let lg = joint_loss_grad(
                    out.forecast.view(),
                    out.reconstruction.view(),
                    w.target.view(),
                    w.input.view(),
                    Some(w.target_observed.view()),
                    Some(w.input_observed.view()),
                )?;
                loss += lg.loss as f64;
                model.backward(
                    &cache,
                    lg.d_forecast.view(),
                    lg.d_reconstruction.view(),
                    &mut grads,
                );
            }
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts = partials.into_iter();
    let (mut loss, mut grads) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        grads.add_assign(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n as f32);
    Ok((loss / n, grads))
}
