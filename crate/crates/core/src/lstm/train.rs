use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{mse_loss, Adam, AdamConfig, Architecture, LstmAe};
use crate::error::{Error, Result};
use crate::types::DataMatrix;

/// Target range of the per-session rescale.
pub const SCALE_LIMIT: f64 = 0.9;

/// Per-session affine map of the data range onto `[-0.9, 0.9]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionScale {
    pub center: f64,
    pub half_range: f64,
}

impl SessionScale {
    /// A constant session maps to 0.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let half = (hi - lo) / 2.0;
        SessionScale {
            center: (hi + lo) / 2.0,
            half_range: if half > 0.0 { half } else { 1.0 },
        }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let k = SCALE_LIMIT / self.half_range;
        x.mapv(|v| (v - self.center) * k)
    }

    pub fn invert(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        let k = self.half_range / SCALE_LIMIT;
        y.mapv(|v| v * k + self.center)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Optional truncation: each session is cut into windows of this many
    /// frames, each its own optimizer step with zero initial state.
    pub window: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::default(),
            epochs: 200,
            adam: AdamConfig::default(),
            seed: 0,
            window: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Train and validation MSE of the initial parameters.
    pub initial_train_mse: f64,
    pub initial_val_mse: f64,
    /// Mean of the per-step train losses seen during each epoch.
    pub train_mse: Vec<f64>,
    /// Validation MSE after each epoch.
    pub val_mse: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn best_val_mse(&self) -> f64 {
        self.val_mse[self.best_epoch]
    }

    pub fn min_train_mse(&self) -> f64 {
        self.train_mse.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn windows(t: usize, window: Option<usize>) -> Vec<(usize, usize)> {
    match window {
        Some(w) if w < t => (0..t).step_by(w).map(|a| (a, (a + w).min(t))).collect(),
        _ => vec![(0, t)],
    }
}

fn mean_loss(model: &LstmAe, sessions: &[Array2<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    for x in sessions {
        acc += mse_loss(model.forward(x.view())?.reconstruction.view(), x.view())?;
    }
    Ok(acc / sessions.len() as f64)
}

/// Trains an autoencoder with one Adam step per session (or per window)
/// and keeps the parameters of the epoch with the lowest validation MSE.
pub fn train(train: &[&DataMatrix], val: &[&DataMatrix], cfg: &TrainConfig) -> Result<(LstmAe, TrainReport)> {
    let start = Instant::now();
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidInput("training needs at least one train session".into()))?;
    if val.is_empty() {
        return Err(Error::InvalidInput("training needs at least one validation session".into()));
    }
    let n = first.pixels();
    if let Some(bad) = train.iter().chain(val).find(|m| m.pixels() != n) {
        return Err(Error::Shape(format!(
            "sessions disagree on pixel count: {n} vs {}",
            bad.pixels()
        )));
    }
    if cfg.window == Some(0) {
        return Err(Error::InvalidInput("window must be >= 1 frame".into()));
    }
    let scaled = |ms: &[&DataMatrix]| -> Vec<Array2<f64>> {
        ms.iter().map(|m| SessionScale::fit(m.values()).apply(m.values())).collect()
    };
    let (xs, vs) = (scaled(train), scaled(val));

    let mut model = LstmAe::new(n, &cfg.architecture, cfg.seed)?;
    let mut opt = Adam::new(model.param_count(), cfg.adam);
    let initial_train_mse = mean_loss(&model, &xs)?;
    let initial_val_mse = mean_loss(&model, &vs)?;
    let mut best = (f64::INFINITY, model.params().to_vec(), 0);
    let mut train_mse = Vec::with_capacity(cfg.epochs);
    let mut val_mse = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (mut acc, mut frames) = (0.0, 0usize);
        for x in &xs {
            for (a, b) in windows(x.nrows(), cfg.window) {
                let chunk = x.slice(s![a..b, ..]);
                let fwd = model.forward(chunk).map_err(|e| diverged(e, epoch))?;
                let loss = mse_loss(fwd.reconstruction.view(), chunk)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                let grads = model.backward(&fwd, chunk)?;
                opt.step(model.params_mut(), &grads)?;
                acc += loss * (b - a) as f64;
                frames += b - a;
            }
        }
        let tl = acc / frames as f64;
        let vl = mean_loss(&model, &vs).map_err(|e| diverged(e, epoch))?;
        if !vl.is_finite() {
            return Err(Error::Diverged { epoch, loss: vl });
        }
        if vl < best.0 {
            best = (vl, model.params().to_vec(), epoch);
        }
        log::info!("epoch {epoch}: train {tl:.6} val {vl:.6}");
        train_mse.push(tl);
        val_mse.push(vl);
    }
    if cfg.epochs > 0 {
        model.params_mut().copy_from_slice(&best.1);
    }
    let report = TrainReport {
        initial_train_mse,
        initial_val_mse,
        train_mse,
        val_mse,
        best_epoch: best.2,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Diverged { epoch, loss: f64::NAN },
        other => other,
    }
}
