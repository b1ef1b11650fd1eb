use std::time::Instant;

use super::optim::{Optimizer, OptimizerState};
use super::task::{gen_batch, mse_grad, mse_loss, ShiftTask};
use crate::adapters::{AdapterSpec, AdapterState};
use crate::densela::RngStream;
use crate::error::{Error, Result};

/// Stream labels for the per-run generators derived from `TrainConfig::seed`.
const INIT_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub seed: u64,
    /// Held-out loss at or below which `epochs_to_threshold` is recorded.
    pub loss_threshold: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            samples_per_epoch: 128,
            seed: 0,
            loss_threshold: None,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted so that frozen baselines can be
    /// measured with the same loop.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.samples_per_epoch == 0 {
            return Err(Error::invalid(format!(
                "epochs, batch_size and samples_per_epoch must be positive (got {}, {}, {})",
                self.epochs, self.batch_size, self.samples_per_epoch
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if let Some(t) = self.loss_threshold {
            if !t.is_finite() {
                return Err(Error::invalid("loss_threshold must be finite"));
            }
        }
        Ok(())
    }

    /// Optimizer steps per epoch: `ceil(samples_per_epoch / batch_size)`.
    pub fn steps_per_epoch(&self) -> usize {
        self.samples_per_epoch.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Display name following the `LoRA_r=8` / `SSVD_p=40%` scheme.
    pub label: String,
    pub method: &'static str,
    /// Rotation mode or SVFT variant, `-` otherwise.
    pub variant: &'static str,
    pub trainable_params: usize,
    /// Held-out loss at the end of each completed epoch. A diverged run
    /// stops early, so its curve is shorter than the configured epochs.
    pub loss_curve: Vec<f64>,
    /// Last finite held-out loss.
    pub final_loss: f64,
    /// 1-based epoch at which the held-out loss first reached the threshold.
    pub epochs_to_threshold: Option<usize>,
    pub diverged: bool,
    pub wall_ms: u64,
    pub seed: u64,
}

/// Trains `spec` attached to `task.w0` on freshly streamed batches.
///
/// Fully deterministic given `(task, spec, cfg)`. Loss turning non-finite
/// ends the run with `diverged` set instead of returning an error; an error
/// is returned for invalid input or if any frozen tensor changes.
pub fn train_run(task: &ShiftTask, spec: AdapterSpec, cfg: &TrainConfig) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.fork(INIT_STREAM);
    let mut data_rng = root.fork(DATA_STREAM);

    let mut state = AdapterState::init(spec, &task.w0, &mut init_rng)?;
    let frozen = state.frozen_digest();
    let (eval_x, eval_y) = task.held_out();
    let mut params = state.params();
    let mut opt = OptimizerState::new(cfg.optimizer, params.len());

    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut final_loss = mse_loss(&state.forward(&eval_x)?, &eval_y)?;
    let mut diverged = false;
    let mut hit = None;

    'epochs: for epoch in 1..=cfg.epochs {
        for _ in 0..cfg.steps_per_epoch() {
            let (x, y) = gen_batch(task, &mut data_rng, cfg.batch_size);
            let pred = state.forward(&x)?;
            let grads = state.param_gradients(&x, &mse_grad(&pred, &y)?)?;
            opt.step(&mut params, &grads, cfg.learning_rate)?;
            if params.iter().any(|p| !p.is_finite()) {
                diverged = true;
                break 'epochs;
            }
            state = match state.with_params(&params) {
                Ok(s) => s,
                Err(Error::Singular(_)) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
        }
        let loss = match state.forward(&eval_x) {
            Ok(pred) => mse_loss(&pred, &eval_y)?,
            Err(Error::Singular(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            diverged = true;
            break;
        }
        curve.push(loss);
        final_loss = loss;
        if hit.is_none() && cfg.loss_threshold.is_some_and(|t| loss <= t) {
            hit = Some(epoch);
        }
    }

    if state.frozen_digest() != frozen {
        return Err(Error::FrozenMutated(spec.to_string()));
    }
    Ok(RunResult {
        label: spec.label(),
        method: spec.tag(),
        variant: spec.variant(),
        trainable_params: state.trainable_param_count(),
        loss_curve: curve,
        final_loss,
        epochs_to_threshold: hit,
        diverged,
        wall_ms: started.elapsed().as_millis() as u64,
        seed: cfg.seed,
    })
}
