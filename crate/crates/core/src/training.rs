//! Maximum-likelihood training: the bivariate-Gaussian NLL objective, Adam
//! with global-norm gradient clipping, a reduce-on-plateau learning-rate
//! schedule, and the epoch loop with per-epoch validation and best-checkpoint
//! tracking.
//!
//! Samples inside a batch run forward/backward on parallel workers against an
//! immutable parameter snapshot; gradients reduce in sample order and the
//! optimizer step is single-writer, so training is bit-reproducible for a
//! fixed seed.

use crate::geometry::Vec2;
use crate::graph::TrackSample;
use crate::model::{
    rollout_on_tape, Checkpoint, GaussianOut, ModelConfig, ModelError, ModelParams,
};
use crate::numerics::{Tape, Tensor};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty validation set")]
    EmptyValidationSet,
    #[error("gaussians and truth deltas differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr0: f64,
    /// Epochs without significant validation improvement before the rate drops.
    pub plateau_patience: usize,
    /// Multiplier applied at each plateau.
    pub lr_factor: f64,
    /// Validation improvement below this does not reset the plateau counter.
    pub min_improve: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Global L2 norm the batch gradient is clipped to.
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Feed ground-truth positions instead of predictions while decoding
    /// during training. Validation always decodes autoregressively.
    pub teacher_forcing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 3e-4,
            plateau_patience: 3,
            lr_factor: 0.3,
            min_improve: 1e-4,
            batch_size: 32,
            max_epochs: 50,
            grad_clip_norm: 5.0,
            seed: 0,
            teacher_forcing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lr0 <= 0.0 {
            return Err(TrainError::BadConfig("lr0 must be positive".to_string()));
        }
        if self.lr_factor <= 0.0 || self.lr_factor >= 1.0 {
            return Err(TrainError::BadConfig(
                "lr_factor must lie in (0, 1)".to_string(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::BadConfig(
                "batch_size and max_epochs must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

// ── Loss ─────────────────────────────────────────────────────────────

/// Summed negative log-likelihood of the truth deltas under the per-step
/// bivariate Gaussians. Finite by construction of the output transforms.
pub fn nll_loss(gaussians: &[GaussianOut], truth: &[Vec2]) -> Result<f64, TrainError> {
    if gaussians.len() != truth.len() {
        return Err(TrainError::LengthMismatch(gaussians.len(), truth.len()));
    }
    let mut total = 0.0;
    for (g, t) in gaussians.iter().zip(truth) {
        let dx = t.x - g.mu.x;
        let dy = t.y - g.mu.y;
        let one_m_r2 = 1.0 - g.rho * g.rho;
        let z = dx * dx / (g.sigma.x * g.sigma.x) + dy * dy / (g.sigma.y * g.sigma.y)
            - 2.0 * g.rho * dx * dy / (g.sigma.x * g.sigma.y);
        total += LN_2PI
            + g.sigma.x.ln()
            + g.sigma.y.ln()
            + 0.5 * one_m_r2.ln()
            + z / (2.0 * one_m_r2);
    }
    Ok(total)
}

/// Truth deltas for evaluating the position-space likelihood: each ground
/// truth point relative to the previous predicted position.
pub fn truth_deltas(predicted: &[Vec2], truth: &[Vec2], start: Vec2) -> Vec<Vec2> {
    let mut prev = start;
    truth
        .iter()
        .zip(predicted)
        .map(|(&gt, &pred)| {
            let d = gt - prev;
            prev = pred;
            d
        })
        .collect()
}

// ── Adam ─────────────────────────────────────────────────────────────

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter moment estimates, step counter, and the current rate.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, lr: f64) -> AdamState {
        let zeros: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Global L2 norm over a gradient set.
pub fn global_grad_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// One bias-corrected Adam update, applied after clipping the gradient set to
/// `grad_clip_norm` in global norm.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut AdamState,
    grad_clip_norm: f64,
) -> Result<(), TrainError> {
    let mut tensors = params.named_mut();
    if tensors.len() != grads.len() {
        return Err(TrainError::LengthMismatch(tensors.len(), grads.len()));
    }
    let norm = global_grad_norm(grads);
    let clip_scale = if norm > grad_clip_norm {
        grad_clip_norm / norm
    } else {
        1.0
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, (_, p)) in tensors.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let pd = p.data_mut();
        for j in 0..pd.len() {
            let gj = g[j] * clip_scale;
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * gj;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            pd[j] -= state.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

// ── Plateau schedule ─────────────────────────────────────────────────

/// Reduce-on-plateau: when the best validation loss has not improved by more
/// than `min_improve` for `patience` consecutive epochs, the rate is
/// multiplied by `factor` and the counter resets.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub lr: f64,
    factor: f64,
    patience: usize,
    min_improve: f64,
    best: Option<f64>,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(lr0: f64, factor: f64, patience: usize, min_improve: f64) -> PlateauSchedule {
        PlateauSchedule {
            lr: lr0,
            factor,
            patience,
            min_improve,
            best: None,
            stale: 0,
        }
    }

    /// Feeds one epoch's validation loss; returns the rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        match self.best {
            None => self.best = Some(val_loss),
            Some(best) if val_loss < best - self.min_improve => {
                self.best = Some(val_loss);
                self.stale = 0;
            }
            Some(_) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    self.lr *= self.factor;
                    self.stale = 0;
                }
            }
        }
        self.lr
    }
}

// ── Epoch loop ───────────────────────────────────────────────────────

/// One epoch's log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    /// Rate in effect during this epoch.
    pub lr: f64,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.epoch, self.train_nll, self.val_nll, self.lr
        )
    }
}

pub fn format_training_log(records: &[EpochRecord]) -> String {
    let mut out = String::from("# epoch\ttrain_nll\tval_nll\tlr\n");
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

pub fn write_training_log(path: &Path, records: &[EpochRecord]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(format_training_log(records).as_bytes())
}

/// Trained model plus its training history.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters at the best validation epoch.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub best_val_nll: f64,
    pub best_epoch: usize,
}

/// Ground-truth prefix matching the configured horizon. Datasets carry 10 or
/// 30 future steps; a shorter-horizon model trains and validates on the
/// prefix.
fn horizon_truth<'a>(
    cfg: &ModelConfig,
    sample: &'a TrackSample,
) -> Result<&'a [Vec2], TrainError> {
    if sample.future.len() < cfg.t_pred_steps {
        return Err(TrainError::BadConfig(format!(
            "sample has {} future steps, model predicts {}",
            sample.future.len(),
            cfg.t_pred_steps
        )));
    }
    Ok(&sample.future[..cfg.t_pred_steps])
}

/// Summed NLL of one sample under the current parameters, plus the gradient
/// of that loss for every parameter tensor in canonical order.
fn sample_grad(
    params: &ModelParams,
    cfg: &ModelConfig,
    sample: &TrackSample,
    teacher_forcing: bool,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let r = rollout_on_tape(
        &mut tape,
        &bound,
        cfg,
        sample,
        Some(horizon_truth(cfg, sample)?),
        teacher_forcing,
    )?;
    let nll = r.nll.expect("future supplied");
    let loss = tape.value(nll).item();
    let grads = tape.backward(nll).map_err(ModelError::Numerics)?;
    let flat: Vec<Tensor> = bound
        .named()
        .into_iter()
        .map(|(_, id)| grads.get(*id).clone())
        .collect();
    Ok((loss, flat))
}

/// Validation NLL of one sample: autoregressive rollout, no gradients.
pub fn sample_nll(
    params: &ModelParams,
    cfg: &ModelConfig,
    sample: &TrackSample,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let r = rollout_on_tape(&mut tape, &bound, cfg, sample, Some(horizon_truth(cfg, sample)?), false)?;
    Ok(tape.value(r.nll.expect("future supplied")).item())
}

/// Runs shuffled mini-batch epochs: per-sample forward/backward in parallel,
/// gradients averaged over the batch, Adam with clipping, per-epoch
/// validation, plateau scheduling, and best-validation checkpointing.
pub fn fit(
    train: &[TrackSample],
    val: &[TrackSample],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<FitResult, TrainError> {
    tcfg.validate()?;
    mcfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }

    let mut params = ModelParams::init(mcfg, tcfg.seed);
    let mut opt = AdamState::new(&params, tcfg.lr0);
    let mut schedule = PlateauSchedule::new(
        tcfg.lr0,
        tcfg.lr_factor,
        tcfg.plateau_patience,
        tcfg.min_improve,
    );
    let mut rng = StdRng::seed_from_u64(tcfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = Vec::with_capacity(tcfg.max_epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();

    for epoch in 1..=tcfg.max_epochs {
        let lr_in_effect = schedule.lr;
        opt.lr = lr_in_effect;
        order.shuffle(&mut rng);

        let mut train_nll_sum = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            let results: Vec<Result<(f64, Vec<Tensor>), TrainError>> = batch
                .par_iter()
                .map(|&i| sample_grad(&params, mcfg, &train[i], tcfg.teacher_forcing))
                .collect();
            let mut acc: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, grads) = r?;
                train_nll_sum += loss;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            let ad = a.data_mut();
                            for (x, y) in ad.iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= inv;
                }
            }
            adam_step(&mut params, &grads, &mut opt, tcfg.grad_clip_norm)?;
        }
        let train_nll = train_nll_sum / train.len() as f64;

        let val_results: Vec<Result<f64, TrainError>> = val
            .par_iter()
            .map(|s| sample_nll(&params, mcfg, s))
            .collect();
        let mut val_sum = 0.0;
        for r in val_results {
            val_sum += r?;
        }
        let val_nll = val_sum / val.len() as f64;

        if val_nll < best_val {
            best_val = val_nll;
            best_epoch = epoch;
            best_params = params.clone();
        }
        log.push(EpochRecord {
            epoch,
            train_nll,
            val_nll,
            lr: lr_in_effect,
        });
        schedule.observe(val_nll);
    }

    Ok(FitResult {
        checkpoint: Checkpoint::new(*mcfg, best_params),
        log,
        best_val_nll: best_val,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LanePolyline;
    use crate::graph::{TimedPos, DT};
    use crate::harness;
    use crate::model::Aggregator;
    use rand::RngExt;

    #[test]
    fn nll_at_peak_matches_closed_form() {
        let g = GaussianOut {
            mu: Vec2::new(0.7, -0.4),
            sigma: Vec2::new(1.0, 1.0),
            rho: 0.0,
        };
        let loss = nll_loss(&[g], &[g.mu]).unwrap();
        assert!((loss - LN_2PI).abs() < 1e-12, "log(2 pi) at the density peak");

        let g5 = GaussianOut {
            rho: 0.5,
            ..g
        };
        let loss = nll_loss(&[g5], &[g5.mu]).unwrap();
        let want = LN_2PI + 0.5 * 0.75f64.ln();
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn nll_density_normalizes_to_one_by_quadrature() {
        // 2-D trapezoid quadrature of the rho = 0.5 density over [-8, 8]^2.
        let g = GaussianOut {
            mu: Vec2::ZERO,
            sigma: Vec2::new(1.0, 1.0),
            rho: 0.5,
        };
        let n = 400;
        let (lo, hi) = (-8.0, 8.0);
        let h = (hi - lo) / n as f64;
        let mut integral = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let x = lo + i as f64 * h;
                let y = lo + j as f64 * h;
                let nll = nll_loss(&[g], &[Vec2::new(x, y)]).unwrap();
                let w_i = if i == 0 || i == n { 0.5 } else { 1.0 };
                let w_j = if j == 0 || j == n { 0.5 } else { 1.0 };
                integral += w_i * w_j * (-nll).exp();
            }
        }
        integral *= h * h;
        assert!((integral - 1.0).abs() < 1e-6, "density integrates to {integral}");
    }

    #[test]
    fn nll_decreases_toward_the_mean() {
        let g = GaussianOut {
            mu: Vec2::new(1.0, 2.0),
            sigma: Vec2::new(0.8, 1.3),
            rho: 0.0,
        };
        let mut prev = f64::INFINITY;
        for step in 0..5 {
            let t = g.mu + Vec2::new(2.0 - 0.5 * step as f64, 0.0);
            let loss = nll_loss(&[g], &[t]).unwrap();
            assert!(loss < prev, "loss is unimodal along the ray");
            prev = loss;
        }
    }

    #[test]
    fn nll_length_mismatch_is_error() {
        let g = GaussianOut {
            mu: Vec2::ZERO,
            sigma: Vec2::new(1.0, 1.0),
            rho: 0.0,
        };
        assert!(matches!(
            nll_loss(&[g], &[]),
            Err(TrainError::LengthMismatch(1, 0))
        ));
    }

    fn tiny_setup() -> (ModelConfig, ModelParams) {
        let cfg = ModelConfig::tiny(Aggregator::Attention);
        let params = ModelParams::init(&cfg, 12);
        (cfg, params)
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let (_, mut params) = tiny_setup();
        let mut state = AdamState::new(&params, 1e-3);
        let before = params.vv_embed.w1.data()[0];
        let mut grads: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        grads[0].data_mut()[0] = 0.37;
        adam_step(&mut params, &grads, &mut state, 5.0).unwrap();
        let after = params.vv_embed.w1.data()[0];
        // Bias-corrected first step is -lr * sign(g) up to epsilon rounding.
        assert!(((before - after) - 1e-3).abs() < 1e-6 * 1e-3 + 1e-12);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let (_, mut params) = tiny_setup();
        let before = params.clone();
        let mut state = AdamState::new(&params, 1e-3);
        let grads: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        adam_step(&mut params, &grads, &mut state, 5.0).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // f(p) = |p|^2 over every parameter: grad = 2p.
        let (_, mut params) = tiny_setup();
        let mut rng = StdRng::seed_from_u64(3);
        for (_, t) in params.named_mut() {
            for v in t.data_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let bowl = |p: &ModelParams| -> f64 {
            p.named().iter().map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>()).sum()
        };
        let before = bowl(&params);
        let mut state = AdamState::new(&params, 0.02);
        for step in 0..500 {
            let grads: Vec<Tensor> = params
                .named()
                .iter()
                .map(|(_, t)| {
                    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| 2.0 * v).collect())
                        .unwrap()
                })
                .collect();
            adam_step(&mut params, &grads, &mut state, 1e9).unwrap();
            if step == 0 {
                assert!(bowl(&params) < before, "one step strictly decreases the bowl");
            }
        }
        let norm: f64 = bowl(&params).sqrt();
        assert!(norm < 1e-2, "|p| after 500 steps: {norm}");
    }

    #[test]
    fn gradient_clipping_bounds_global_norm() {
        let (_, params) = tiny_setup();
        let grads: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| {
                Tensor::new(t.shape().to_vec(), vec![3.0; t.numel()]).unwrap()
            })
            .collect();
        let norm = global_grad_norm(&grads);
        assert!(norm > 5.0);
        let clip = 5.0 / norm;
        let clipped: Vec<Tensor> = grads
            .iter()
            .map(|g| {
                Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| v * clip).collect())
                    .unwrap()
            })
            .collect();
        assert!(global_grad_norm(&clipped) <= 5.0 + 1e-9);
    }

    #[test]
    fn plateau_schedule_published_behavior() {
        let mut s = PlateauSchedule::new(3e-4, 0.3, 3, 1e-4);
        for loss in [5.0, 4.0, 3.0, 2.0] {
            assert_eq!(s.observe(loss), 3e-4, "improving losses keep the rate");
        }

        let mut s = PlateauSchedule::new(3e-4, 0.3, 3, 1e-4);
        let mut lr = 0.0;
        for loss in [3.0, 3.0, 3.0, 3.0] {
            lr = s.observe(loss);
        }
        assert!((lr - 9e-5).abs() < 1e-18, "one plateau: 0.3x of 3e-4");

        let mut s = PlateauSchedule::new(3e-4, 0.3, 3, 1e-4);
        let mut lr = 0.0;
        for _ in 0..7 {
            lr = s.observe(3.0);
        }
        assert!((lr - 2.7e-5).abs() < 1e-18, "two consecutive plateaus compose");
    }

    fn straight_sample() -> TrackSample {
        let lane = LanePolyline::new(0, vec![Vec2::new(-30.0, 0.0), Vec2::new(60.0, 0.0)]).unwrap();
        let obs: Vec<TimedPos> = (0..8)
            .map(|i| TimedPos {
                t: -(7 - i) as f64 * DT,
                pos: Vec2::new(i as f64 * 0.5, 0.0),
            })
            .collect();
        let last = obs.last().unwrap().pos;
        TrackSample {
            obs,
            future: (1..=10).map(|i| last + Vec2::new(0.5 * i as f64, 0.0)).collect(),
            lanes: vec![lane],
            meta: "straight".into(),
        }
    }

    #[test]
    fn single_sample_overfit_reaches_low_ade() {
        let mut cfg = ModelConfig::tiny(Aggregator::Attention);
        cfg.t_pred_steps = 10;
        let sample = straight_sample();
        let tcfg = TrainConfig {
            lr0: 3e-3,
            max_epochs: 500,
            batch_size: 1,
            seed: 4,
            // The rate must not collapse on a noisy single-sample loss.
            plateau_patience: 1000,
            ..TrainConfig::default()
        };
        let fitres = fit(
            std::slice::from_ref(&sample),
            std::slice::from_ref(&sample),
            &cfg,
            &tcfg,
        )
        .unwrap();
        let out = crate::model::rollout(&fitres.checkpoint.params, &cfg, &sample).unwrap();
        let ade = harness::ade(&out.trajectory, &sample.future).unwrap();
        assert!(ade < 0.05, "overfit ADE {ade}");
    }

    #[test]
    fn fit_is_seed_deterministic() {
        let mut cfg = ModelConfig::tiny(Aggregator::Pooling);
        cfg.t_pred_steps = 10;
        let samples: Vec<TrackSample> = (0..4).map(|_| straight_sample()).collect();
        let tcfg = TrainConfig {
            max_epochs: 3,
            batch_size: 2,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = fit(&samples, &samples[..1], &cfg, &tcfg).unwrap();
        let b = fit(&samples, &samples[..1], &cfg, &tcfg).unwrap();
        assert_eq!(format_training_log(&a.log), format_training_log(&b.log));
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
    }

    #[test]
    fn fit_rejects_empty_sets() {
        let cfg = ModelConfig::tiny(Aggregator::Pooling);
        let tcfg = TrainConfig::default();
        let s = vec![straight_sample()];
        assert!(matches!(
            fit(&[], &s, &cfg, &tcfg),
            Err(TrainError::EmptyTrainingSet)
        ));
        assert!(matches!(
            fit(&s, &[], &cfg, &tcfg),
            Err(TrainError::EmptyValidationSet)
        ));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_validation_loss() {
        let mut cfg = ModelConfig::tiny(Aggregator::Attention);
        cfg.t_pred_steps = 10;
        let sample = straight_sample();
        let tcfg = TrainConfig {
            max_epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let fitres = fit(
            std::slice::from_ref(&sample),
            std::slice::from_ref(&sample),
            &cfg,
            &tcfg,
        )
        .unwrap();
        let bytes = fitres.checkpoint.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        let v1 = sample_nll(&fitres.checkpoint.params, &cfg, &sample).unwrap();
        let v2 = sample_nll(&back.params, &back.config, &sample).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits(), "bit-identical after the roundtrip");
    }
}
