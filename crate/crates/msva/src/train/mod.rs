//! Per-fold supervised training: Adam with decoupled weight decay, one video
//! per optimization step, stall-based early stopping, and checkpoints of both
//! the best and the final epoch.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureBundle;
use crate::model::{ModelConfig, ModelError, MsvaModel};
use crate::rng::{RngState, SeededRng};
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("bundle error: {0}")]
    Bundle(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub max_epochs: usize,
    /// Consecutive stalled epochs tolerated before stopping.
    pub stall_patience: usize,
    /// Relative loss improvement below which an epoch counts as stalled.
    pub stall_tolerance: f64,
    pub l2_weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            max_epochs: 300,
            stall_patience: 50,
            stall_tolerance: 1e-6,
            l2_weight_decay: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Structural checks. A zero learning rate is accepted here (useful for
    /// frozen-parameter diagnostics); user-facing configuration paths require
    /// a positive rate via [`TrainConfig::validate_strict`].
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.max_epochs < 1 {
            return Err(TrainError::Config("max_epochs must be >= 1".into()));
        }
        if self.stall_patience < 1 {
            return Err(TrainError::Config("stall_patience must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn validate_strict(&self) -> Result<(), TrainError> {
        self.validate()?;
        if self.learning_rate <= 0.0 {
            return Err(TrainError::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// First/second Adam moments per parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn for_params(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update. Decoupled L2 decay shrinks the parameters
/// by `lr * wd * theta` before the Adam delta is applied.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::Contract(format!(
            "adam_step arity mismatch: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if grads[i].len() != p.numel() || state.m[i].len() != p.numel() {
            return Err(TrainError::Contract(format!(
                "adam_step shape mismatch on parameter {i}"
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let lr = cfg.learning_rate;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let data = p.data_mut();
        for j in 0..data.len() {
            data[j] -= lr * cfg.l2_weight_decay * data[j];
            let g = grads[i][j];
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = state.m[i][j] / bc1;
            let v_hat = state.v[i][j] / bc2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Per-epoch mean training loss (dropout-disabled full pass) and the index of
/// the best epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub losses: Vec<f64>,
    pub best_epoch: usize,
}

/// Complete training snapshot: parameters, both configs, the loss history and
/// the position of the training random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MsvaModel,
    pub train_config: TrainConfig,
    pub epoch_log: EpochLog,
    pub rng: RngState,
}

/// Outcome of one fold: the lowest-loss checkpoint and the final one.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub best: Checkpoint,
    pub last: Checkpoint,
}

fn check_bundles(bundles: &[FeatureBundle], config: &ModelConfig) -> Result<(), TrainError> {
    if bundles.is_empty() {
        return Err(TrainError::Config("empty train set".into()));
    }
    for b in bundles {
        for s in &config.streams {
            match b.streams.get(s) {
                None => {
                    return Err(TrainError::Bundle(format!(
                        "{}: missing stream {s}",
                        b.video_id
                    )))
                }
                Some(x) => {
                    if x.shape()[1] != config.dims[s] {
                        return Err(TrainError::Bundle(format!(
                            "{}: stream {s} has width {} but the model expects {}",
                            b.video_id,
                            x.shape()[1],
                            config.dims[s]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Dropout-disabled mean MSE of the model over a set of videos.
pub fn mean_eval_loss(
    model: &MsvaModel,
    bundles: &[FeatureBundle],
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for b in bundles {
        let streams = b.stream_subset(&model.config().streams);
        let pred = model.predict(&streams)?;
        let gt = b.gtscore.data();
        let mut acc = 0.0;
        for (p, t) in pred.iter().zip(gt.iter()) {
            let d = p - t;
            acc += d * d;
        }
        total += acc / gt.len() as f64;
    }
    Ok(total / bundles.len() as f64)
}

/// Trains one model on the given fold's training videos.
///
/// One epoch is a full seeded-shuffle pass with one video per Adam step.
/// After each epoch the training loss is measured with dropout disabled; the
/// run stops at `max_epochs` or once `stall_patience` consecutive epochs show
/// relative improvement below `stall_tolerance`.
pub fn train_fold(
    bundles: &[FeatureBundle],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    train_cfg.validate()?;
    check_bundles(bundles, model_cfg)?;
    let mut rng = SeededRng::from_u64(train_cfg.seed);
    let model = MsvaModel::init_with_rng(model_cfg, &mut rng)?;
    run_training(model, rng, bundles, train_cfg)
}

/// Continues training from a checkpoint's parameters and random stream
/// position (fresh optimizer moments, fresh epoch log).
pub fn train_fold_resume(
    init: &Checkpoint,
    bundles: &[FeatureBundle],
) -> Result<TrainRun, TrainError> {
    init.train_config.validate()?;
    check_bundles(bundles, init.model.config())?;
    let rng = SeededRng::restore(&init.rng)
        .map_err(|e| TrainError::Format {
            field: "rng".into(),
            message: e,
        })?;
    run_training(init.model.clone(), rng, bundles, &init.train_config)
}

fn run_training(
    mut model: MsvaModel,
    mut rng: SeededRng,
    bundles: &[FeatureBundle],
    train_cfg: &TrainConfig,
) -> Result<TrainRun, TrainError> {
    let streams: Vec<_> = bundles
        .iter()
        .map(|b| b.stream_subset(&model.config().streams))
        .collect();
    let targets: Vec<Tensor> = bundles.iter().map(|b| b.gtscore.clone()).collect();

    let mut adam = {
        let params: Vec<&Tensor> = model.named_params().into_iter().map(|(_, t)| t).collect();
        AdamState::for_params(&params)
    };

    let mut losses: Vec<f64> = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_model = model.clone();
    let mut best_rng = rng.state();
    let mut stall = 0usize;
    let mut prev: Option<f64> = None;

    for epoch in 0..train_cfg.max_epochs {
        let mut order: Vec<usize> = (0..bundles.len()).collect();
        rng.shuffle(&mut order);
        for idx in order {
            let mut tape = Tape::new();
            let pass = model.forward_on_tape(&mut tape, &streams[idx], true, &mut rng)?;
            let target = tape.leaf(&targets[idx]);
            let loss = tape.mse_loss(pass.output, target)?;
            tape.backward(loss)?;
            let grads: Vec<Vec<f64>> = pass
                .param_ids
                .iter()
                .map(|id| tape.grad(*id).to_vec())
                .collect();
            drop(tape);
            let mut named = model.named_params_mut();
            let mut refs: Vec<&mut Tensor> = named.iter_mut().map(|(_, t)| &mut **t).collect();
            adam_step(&mut refs, &grads, &mut adam, train_cfg)?;
        }

        let loss = mean_eval_loss(&model, bundles)?;
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_epoch = epoch;
            best_model = model.clone();
            best_rng = rng.state();
        }
        if let Some(p) = prev {
            let rel = (p - loss) / p.abs().max(1e-12);
            if rel < train_cfg.stall_tolerance {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        prev = Some(loss);
        if stall >= train_cfg.stall_patience {
            break;
        }
    }

    let best = Checkpoint {
        model: best_model,
        train_config: train_cfg.clone(),
        epoch_log: EpochLog {
            losses: losses[..=best_epoch].to_vec(),
            best_epoch,
        },
        rng: best_rng,
    };
    let last = Checkpoint {
        model,
        train_config: train_cfg.clone(),
        epoch_log: EpochLog {
            losses,
            best_epoch,
        },
        rng: rng.state(),
    };
    Ok(TrainRun { best, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};
    use crate::model::{Aperture, FusionSpec, FusionStrategy};
    use crate::stream::Stream;

    fn model_bits(model: &MsvaModel) -> Vec<u64> {
        model
            .named_params()
            .into_iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    }

    fn synth_cfg(dims: usize, dropout: f64) -> ModelConfig {
        ModelConfig::uniform_dims(
            vec![Stream::Object, Stream::Rgb, Stream::Flow],
            dims,
            FusionSpec {
                strategy: FusionStrategy::Intermediate,
                dropout_rate: dropout,
            },
            Aperture::Unbounded,
        )
    }

    #[test]
    fn first_adam_step_moves_by_about_lr() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            l2_weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut theta = Tensor::scalar(1.0);
        let mut state = AdamState::for_params(&[&theta]);
        adam_step(&mut [&mut theta], &[vec![5.0]], &mut state, &cfg).unwrap();
        let delta = 1.0 - theta.data()[0];
        assert!((delta - cfg.learning_rate).abs() <= 1e-6, "delta {delta}");
    }

    #[test]
    fn zero_grads_zero_decay_leave_params_unchanged() {
        let cfg = TrainConfig {
            l2_weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut theta = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let before = theta.clone();
        let mut state = AdamState::for_params(&[&theta]);
        for _ in 0..10 {
            adam_step(&mut [&mut theta], &[vec![0.0; 3]], &mut state, &cfg).unwrap();
        }
        assert!(theta.bits_eq(&before));
    }

    #[test]
    fn three_steps_match_hand_iterated_recurrence() {
        // Oracle: the scalar Adam recurrence on f(theta) = theta^2, iterated
        // directly in test code.
        let cfg = TrainConfig {
            learning_rate: 0.1,
            l2_weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut theta = Tensor::scalar(1.0);
        let mut state = AdamState::for_params(&[&theta]);

        let mut want = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * want;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            want -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);

            let g_impl = 2.0 * theta.data()[0];
            adam_step(&mut [&mut theta], &[vec![g_impl]], &mut state, &cfg).unwrap();
            assert!(
                (theta.data()[0] - want).abs() <= 1e-15,
                "step {t}: {} vs {want}",
                theta.data()[0]
            );
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let cfg = TrainConfig::default();
        let mut theta = Tensor::vector(vec![1.0, 2.0]);
        let mut state = AdamState::for_params(&[&theta]);
        let err = adam_step(&mut [&mut theta], &[vec![1.0]], &mut state, &cfg).unwrap_err();
        assert!(matches!(err, TrainError::Contract(_)));
    }

    fn tiny_dataset(n: usize, seed: u64) -> Vec<crate::data::FeatureBundle> {
        synth_dataset(&SynthSpec {
            n_videos: n,
            t_min: 32,
            t_max: 32,
            dims: 16,
            n_users: 3,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn frozen_training_stops_after_patience_plus_one_epochs() {
        let bundles = tiny_dataset(2, 31);
        let train_cfg = TrainConfig {
            learning_rate: 0.0,
            l2_weight_decay: 0.0,
            max_epochs: 300,
            stall_patience: 5,
            seed: 3,
            ..TrainConfig::default()
        };
        let run = train_fold(&bundles, &synth_cfg(16, 0.0), &train_cfg).unwrap();
        assert_eq!(run.last.epoch_log.losses.len(), 6);
        // lr = 0 and decay = 0: parameters never move.
        let fresh = {
            let mut rng = SeededRng::from_u64(3);
            MsvaModel::init_with_rng(&synth_cfg(16, 0.0), &mut rng).unwrap()
        };
        assert_eq!(model_bits(&run.last.model), model_bits(&fresh));
    }

    #[test]
    fn overfits_two_videos_below_1e_minus_3() {
        let bundles = tiny_dataset(2, 37);
        let train_cfg = TrainConfig {
            learning_rate: 2e-3,
            max_epochs: 300,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = train_fold(&bundles, &synth_cfg(16, 0.0), &train_cfg).unwrap();
        let best = run.best.epoch_log.losses[run.best.epoch_log.best_epoch];
        assert!(best < 1e-3, "best training loss {best}");
        // Best epoch can never be worse than the first recorded epoch.
        assert!(best <= run.last.epoch_log.losses[0]);
    }

    #[test]
    fn single_video_is_learnable() {
        let bundles = tiny_dataset(1, 39);
        let train_cfg = TrainConfig {
            learning_rate: 2e-3,
            max_epochs: 300,
            seed: 8,
            ..TrainConfig::default()
        };
        let run = train_fold(&bundles, &synth_cfg(16, 0.0), &train_cfg).unwrap();
        let best = run.best.epoch_log.losses[run.best.epoch_log.best_epoch];
        assert!(best < 1e-3, "single-video training loss {best}");
    }

    #[test]
    fn same_seed_gives_bit_identical_checkpoints() {
        let bundles = tiny_dataset(3, 41);
        let train_cfg = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let cfg = synth_cfg(16, 0.25);
        let a = train_fold(&bundles, &cfg, &train_cfg).unwrap();
        let b = train_fold(&bundles, &cfg, &train_cfg).unwrap();
        assert_eq!(model_bits(&a.last.model), model_bits(&b.last.model));
        assert_eq!(a.last.rng, b.last.rng);
        assert_eq!(a.last.epoch_log, b.last.epoch_log);
        assert_eq!(model_bits(&a.best.model), model_bits(&b.best.model));
    }

    #[test]
    fn empty_train_set_is_a_config_error() {
        let train_cfg = TrainConfig::default();
        assert!(matches!(
            train_fold(&[], &synth_cfg(16, 0.0), &train_cfg),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn wrong_stream_width_is_a_bundle_error() {
        let bundles = tiny_dataset(1, 43);
        let train_cfg = TrainConfig::default();
        let err = train_fold(&bundles, &synth_cfg(8, 0.0), &train_cfg).unwrap_err();
        assert!(matches!(err, TrainError::Bundle(_)));
    }

    #[test]
    fn resume_trajectory_survives_checkpoint_round_trip() {
        let bundles = tiny_dataset(2, 47);
        let train_cfg = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 4,
            seed: 13,
            ..TrainConfig::default()
        };
        let run = train_fold(&bundles, &synth_cfg(16, 0.3), &train_cfg).unwrap();

        let tmp = tempfile::tempdir().unwrap();
        save_checkpoint(&run.last, tmp.path()).unwrap();
        let reloaded = load_checkpoint(tmp.path()).unwrap();
        assert_eq!(reloaded, run.last);

        let direct = train_fold_resume(&run.last, &bundles).unwrap();
        let via_disk = train_fold_resume(&reloaded, &bundles).unwrap();
        assert_eq!(
            model_bits(&direct.last.model),
            model_bits(&via_disk.last.model)
        );
        assert_eq!(direct.last.rng, via_disk.last.rng);
    }
}
