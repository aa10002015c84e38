//! Adam optimization of the field on fresh interior batches.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energies::{loss_and_grad, FDConfig, LossKind, LossRecord, MollifierParams};
use crate::geometry::sample_inside;
use crate::neural_field::CoordinateField;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub every_n_steps: usize,
}

impl LrDecay {
    pub fn rate_at(decay: Option<&LrDecay>, base: f64, step: usize) -> f64 {
        match decay {
            Some(d) if d.every_n_steps > 0 => base * d.factor.powi((step / d.every_n_steps) as i32),
            _ => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(rename = "training_steps")]
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss: LossKind,
    #[serde(default)]
    pub lr_decay: Option<LrDecay>,
    pub rng_seed: u64,
    #[serde(flatten)]
    pub mollifier: MollifierParams,
    #[serde(flatten)]
    pub fd: FDConfig,
    #[serde(default = "checkpoint_default")]
    pub checkpoint_every: usize,
    /// Size of the fixed held-out batch scored at every checkpoint.
    #[serde(default = "heldout_default")]
    pub heldout_size: usize,
}

fn checkpoint_default() -> usize {
    250
}

fn heldout_default() -> usize {
    3000
}

impl TrainConfig {
    pub fn defaults_2d() -> Self {
        TrainConfig {
            steps: 2000,
            learning_rate: 1e-3,
            batch_size: 3000,
            loss: LossKind::Tv,
            lr_decay: None,
            rng_seed: 0,
            mollifier: MollifierParams::defaults_2d(),
            fd: FDConfig::default(),
            checkpoint_every: 250,
            heldout_size: 3000,
        }
    }

    pub fn defaults_3d() -> Self {
        TrainConfig {
            steps: 3000,
            learning_rate: 5e-4,
            batch_size: 2000,
            mollifier: MollifierParams::defaults_3d(),
            heldout_size: 2000,
            ..Self::defaults_2d()
        }
    }

    pub fn defaults_for(dim: usize) -> Self {
        if dim == 3 {
            Self::defaults_3d()
        } else {
            Self::defaults_2d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.heldout_size == 0 {
            return Err(Error::InvalidConfig("learning rate and batch sizes must be positive".into()));
        }
        if !(self.fd.spacing > 0.0) {
            return Err(Error::InvalidConfig("finite-difference spacing must be positive".into()));
        }
        self.mollifier.validate()
    }
}

/// Bias-corrected Adam moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates skipped because of non-finite gradients.
    pub skipped: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8, skipped: 0 }
    }
}

/// One Adam update; returns `false` (and leaves everything but the skip
/// counter untouched) when the gradient has non-finite entries.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: f64) -> Result<bool> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!("adam: {} params, {} grads, {} moments", params.len(), grads.len(), state.m.len())));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        state.skipped += 1;
        return Ok(false);
    }
    state.step += 1;
    let b1 = T::lit(state.beta1);
    let b2 = T::lit(state.beta2);
    let one = T::one();
    let c1 = T::lit(1.0 - state.beta1.powi(state.step as i32));
    let c2 = T::lit(1.0 - state.beta2.powi(state.step as i32));
    let lr = T::lit(lr);
    let eps = T::lit(state.eps);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p -= lr * mh / (vh.sqrt() + eps);
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: usize,
    pub heldout_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<LossRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    pub skipped_updates: u64,
}

impl TrainReport {
    pub fn initial_heldout(&self) -> Option<f64> {
        self.checkpoints.first().map(|c| c.heldout_loss)
    }

    pub fn final_heldout(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.heldout_loss)
    }
}

type CheckpointHook<'a, T> = dyn FnMut(usize, &CoordinateField<T>, f64) -> Result<()> + 'a;

const RESAMPLE_ATTEMPTS: usize = 10;

/// Fixed held-out batch used to score checkpoints.
pub fn heldout_batch<T: Real>(field: &CoordinateField<T>, cfg: &TrainConfig) -> Result<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    sample_inside(field.cage(), cfg.heldout_size, &mut rng)
}

/// Held-out loss of the loss selected in `cfg`.
pub fn evaluate_loss<T: Real>(field: &CoordinateField<T>, cfg: &TrainConfig, batch: &[T]) -> Result<f64> {
    Ok(loss_and_grad(field, batch, cfg.loss, &cfg.fd, &cfg.mollifier, false)?.0.loss.as_f64())
}

/// Runs `cfg.steps` Adam updates. `on_checkpoint` is called with the step
/// and the parameters at every checkpoint (including step 0 and the end).
///
/// On a non-finite loss the parameters of the last checkpoint are restored
/// and `Error::Diverged` is returned.
pub fn train_with<T: Real>(
    field: &mut CoordinateField<T>,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &CoordinateField<T>, f64) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport { history: Vec::new(), checkpoints: Vec::new(), skipped_updates: 0 };
    if cfg.steps == 0 {
        return Ok(report);
    }
    let heldout = heldout_batch(field, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut adam = AdamState::new(field.params.len());
    let start = Instant::now();
    let mut last_good = field.params.data().to_vec();
    let checkpoint = |step: usize, field: &CoordinateField<T>, report: &mut TrainReport, f: &mut CheckpointHook<'_, T>| -> Result<bool> {
        let l = match evaluate_loss(field, cfg, &heldout) {
            Ok(l) => l,
            Err(Error::Diverged(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        if !l.is_finite() {
            return Ok(false);
        }
        report.checkpoints.push(CheckpointRecord { step, heldout_loss: l });
        f(step, field, l)?;
        Ok(true)
    };
    checkpoint(0, field, &mut report, &mut on_checkpoint)?;
    for step in 0..cfg.steps {
        let mut attempt = 0;
        let (eval, grad) = loop {
            let batch = sample_inside(field.cage(), cfg.batch_size, &mut rng)?;
            match loss_and_grad(field, &batch, cfg.loss, &cfg.fd, &cfg.mollifier, true) {
                Ok((e, g)) => break (e, g.expect("gradient requested")),
                Err(Error::EmptyBatch) if attempt + 1 < RESAMPLE_ATTEMPTS => attempt += 1,
                Err(e @ Error::Diverged(_)) => {
                    field.params.set_data(last_good)?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
        };
        let loss = eval.loss.as_f64();
        if !loss.is_finite() {
            field.params.set_data(last_good)?;
            return Err(Error::Diverged(format!("non-finite loss at step {step}")));
        }
        report.history.push(LossRecord { step, loss, wall_clock: start.elapsed().as_secs_f64() });
        let lr = LrDecay::rate_at(cfg.lr_decay.as_ref(), cfg.learning_rate, step);
        adam_step(field.params.data_mut(), &grad, &mut adam, lr)?;
        let done = step + 1;
        if done % cfg.checkpoint_every.max(1) == 0 || done == cfg.steps {
            if !checkpoint(done, field, &mut report, &mut on_checkpoint)? {
                field.params.set_data(last_good)?;
                return Err(Error::Diverged(format!("non-finite held-out loss at step {done}")));
            }
            last_good = field.params.data().to_vec();
        }
    }
    report.skipped_updates = adam.skipped;
    Ok(report)
}

pub fn train<T: Real>(field: &mut CoordinateField<T>, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(field, cfg, |_, _, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0f64, -2.0, 3.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut p = vec![0.0f64; 2];
        let mut s = AdamState::new(2);
        for _ in 0..100 {
            adam_step(&mut p, &[2.0, -0.5], &mut s, 1e-2).unwrap();
        }
        // bias-corrected Adam steps by ~lr per iteration for a constant gradient
        assert!((p[0] + 1.0).abs() < 1e-6 && (p[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut x: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.3).collect();
        let mut s = AdamState::new(10);
        let scales: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
        for _ in 0..2000 {
            let g: Vec<f64> = x.iter().zip(&scales).map(|(v, c)| 2.0 * c * v).collect();
            adam_step(&mut x, &g, &mut s, 1e-2).unwrap();
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn non_finite_gradient_is_skipped() {
        let mut p = vec![1.0f64, 1.0];
        let mut s = AdamState::new(2);
        assert!(!adam_step(&mut p, &[f64::NAN, 0.0], &mut s, 0.1).unwrap());
        assert_eq!((p[0], s.skipped, s.step), (1.0, 1, 0));
        assert!(adam_step(&mut p, &[1.0], &mut s, 0.1).is_err());
    }

    #[test]
    fn lr_decay_schedule() {
        let d = LrDecay { factor: 0.8, every_n_steps: 150 };
        assert_eq!(LrDecay::rate_at(Some(&d), 1e-3, 149), 1e-3);
        assert!((LrDecay::rate_at(Some(&d), 1e-3, 300) - 0.64e-3).abs() < 1e-15);
        assert_eq!(LrDecay::rate_at(None, 1e-3, 10_000), 1e-3);
    }

    #[test]
    fn config_serde_mirrors_table_names() {
        let cfg = TrainConfig::defaults_2d();
        let v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["training_steps"], 2000);
        assert_eq!(v["batch_size"], 3000);
        assert_eq!(v["smoothing_sharpness"], 3000.0);
        assert_eq!(v["smoothing_radius"], 5e-3);
        let back: TrainConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
    }
}
