use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::backward::{backward_scaled, ShredGradients};
use super::forward::{lstm_stack_forward, sdn_forward_batch};
use super::model::ShredModel;
use super::ShredError;
use crate::dataset::LaggedBatch;
use crate::linalg::DenseMatrix;
use crate::math;

/// Fixed gradient chunk width. Chunk boundaries never depend on the
/// thread count, so parallel and sequential execution produce identical
/// bits.
const GRAD_CHUNK: usize = 16;

/// Training hyperparameters. The seed fixes weight initialization and
/// epoch shuffling completely.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without a new best validation loss before stopping. The
    /// loss sits on a long plateau (roughly epochs 10-90 on the campaign
    /// datasets) before the recurrence learns to discriminate the drive
    /// parameter, so the window must outlast it.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 75,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ShredError> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(ShredError::Config(String::from(
                "epochs, batch size and patience must be positive",
            )));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(ShredError::Config(String::from(
                "learning rate must be non-negative",
            )));
        }
        Ok(())
    }
}

/// Adam first/second-moment accumulators, shaped like the model tensors.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl OptimizerState {
    pub fn new(model: &ShredModel) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One Adam update with bias correction.
    pub fn apply(&mut self, model: &mut ShredModel, grads: &ShredGradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - powi(self.beta1, t);
        let bc2 = 1.0 - powi(self.beta2, t);
        for ((params, grad), (m, v)) in model
            .tensor_slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..params.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= lr * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
        }
    }
}

fn powi(base: f64, mut exp: i32) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

/// Per-epoch loss record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// (train loss, validation loss) per completed epoch.
    pub epochs: Vec<(f64, f64)>,
    /// Epoch index of the restored best validation loss.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

/// Loss and summed gradients over samples with a shared normalization,
/// computed in fixed chunks. With the `parallel` feature the chunks fan
/// out over threads; the chunk partition and reduction order stay fixed,
/// so the result is bitwise identical either way.
fn chunked_backward(
    model: &ShredModel,
    samples: &[&LaggedBatch],
    denom: f64,
) -> Result<(f64, ShredGradients), ShredError> {
    let out_w = model.arch.output_map.width();
    let run_chunk = |chunk: &[&LaggedBatch]| -> Result<(f64, ShredGradients), ShredError> {
        let windows: Vec<&DenseMatrix> = chunk.iter().map(|s| &s.window).collect();
        let mut targets = DenseMatrix::zeros(chunk.len(), out_w);
        for (b, s) in chunk.iter().enumerate() {
            targets.row_mut(b).copy_from_slice(&s.target);
        }
        backward_scaled(model, &windows, &targets, denom)
    };

    let chunks: Vec<&[&LaggedBatch]> = samples.chunks(GRAD_CHUNK).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<Result<(f64, ShredGradients), ShredError>> = {
        use rayon::prelude::*;
        chunks.par_iter().map(|c| run_chunk(c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Result<(f64, ShredGradients), ShredError>> =
        chunks.iter().map(|c| run_chunk(c)).collect();

    let mut total_sse = 0.0;
    let mut grads = ShredGradients::zeros_like(model);
    for p in partials {
        let (sse, g) = p?;
        total_sse += sse;
        grads.add_assign(&g);
    }
    Ok((total_sse / denom, grads))
}

/// Forward-only loss over samples, same fixed chunking.
fn chunked_loss(model: &ShredModel, samples: &[&LaggedBatch]) -> Result<f64, ShredError> {
    let out_w = model.arch.output_map.width();
    let run_chunk = |chunk: &[&LaggedBatch]| -> Result<f64, ShredError> {
        let windows: Vec<&DenseMatrix> = chunk.iter().map(|s| &s.window).collect();
        let (_, l2) = lstm_stack_forward(model, &windows)?;
        let sdn = sdn_forward_batch(&model.sdn, l2.last_hidden().clone());
        let mut sse = 0.0;
        for (b, s) in chunk.iter().enumerate() {
            for (j, t) in s.target.iter().enumerate() {
                let r = sdn.output[(b, j)] - t;
                sse += r * r;
            }
        }
        Ok(sse)
    };
    let chunks: Vec<&[&LaggedBatch]> = samples.chunks(GRAD_CHUNK).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<Result<f64, ShredError>> = {
        use rayon::prelude::*;
        chunks.par_iter().map(|c| run_chunk(c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Result<f64, ShredError>> = chunks.iter().map(|c| run_chunk(c)).collect();

    let mut sse = 0.0;
    for p in partials {
        sse += p?;
    }
    Ok(sse / (samples.len() * out_w) as f64)
}

/// Unbiased-enough bounded integer from one 64-bit draw (fixed-point
/// multiply); deterministic for a given rng state.
fn bounded(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Adam training with shuffled mini-batches and early stopping on
/// validation loss. The best-validation weights are restored on return.
pub fn train(
    model: &mut ShredModel,
    train_samples: &[&LaggedBatch],
    val_samples: &[&LaggedBatch],
    config: &TrainConfig,
) -> Result<TrainHistory, ShredError> {
    config.validate()?;
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(ShredError::Config(String::from(
            "training requires non-empty train and validation sets",
        )));
    }

    // Shuffling stream is independent of the weight-init stream.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut opt = OptimizerState::new(model);

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_validation_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut best_weights = model.clone();
    let mut wait = 0usize;

    for epoch in 0..config.epochs {
        // Fisher-Yates shuffle.
        for i in (1..order.len()).rev() {
            let j = bounded(&mut rng, i + 1);
            order.swap(i, j);
        }

        let mut epoch_sse_norm = 0.0;
        let mut seen = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&LaggedBatch> = batch_idx.iter().map(|&i| train_samples[i]).collect();
            let denom = (batch.len() * model.arch.output_map.width()) as f64;
            let (loss, grads) = chunked_backward(model, &batch, denom)?;
            if !loss.is_finite() {
                return Err(ShredError::Diverged { epoch });
            }
            opt.apply(model, &grads, config.learning_rate);
            epoch_sse_norm += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = epoch_sse_norm / seen as f64;
        let val_loss = chunked_loss(model, val_samples)?;
        if !val_loss.is_finite() {
            return Err(ShredError::Diverged { epoch });
        }
        history.epochs.push((train_loss, val_loss));

        if val_loss < history.best_validation_loss {
            history.best_validation_loss = val_loss;
            history.best_epoch = epoch;
            best_weights = model.clone();
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    *model = best_weights;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LaggedBatch, MinMax, OutputMap, ScalingParams};
    use crate::shred::model::{ShredArch, ShredModel};

    fn toy_scaling() -> ScalingParams {
        ScalingParams {
            fields: Vec::new(),
            latent: vec![MinMax { min: 0.0, max: 1.0 }],
            drive: None,
        }
    }

    fn tiny_arch(out: usize) -> ShredArch {
        ShredArch {
            n_sensors: 2,
            hidden: 8,
            sdn_hidden: (10, 12),
            lag: 5,
            output_map: OutputMap {
                blocks: vec![(alloc::string::String::from("T"), out)],
                param_head: false,
            },
        }
    }

    /// Synthetic dataset: targets are a fixed linear map of the window
    /// mean, which a network can fit quickly.
    fn linear_samples(n: usize, seed: u64) -> Vec<LaggedBatch> {
        let mut state = seed;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..n)
            .map(|i| {
                let window = DenseMatrix::from_fn(5, 2, |_, _| next());
                let mean: f64 = window.data().iter().sum::<f64>() / 10.0;
                let target = vec![0.8 * mean + 0.1, -0.5 * mean + 0.4];
                LaggedBatch {
                    window,
                    target,
                    trajectory: 0,
                    frame: i,
                }
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut model = ShredModel::init(tiny_arch(2), toy_scaling(), 5).unwrap();
        let before = model.clone();
        let train_data = linear_samples(12, 1);
        let val_data = linear_samples(4, 2);
        let train_refs: Vec<&LaggedBatch> = train_data.iter().collect();
        let val_refs: Vec<&LaggedBatch> = val_data.iter().collect();
        let config = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            batch_size: 4,
            patience: 5,
            seed: 3,
        };
        train(&mut model, &train_refs, &val_refs, &config).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn toy_linear_targets_drop_validation_loss_tenfold() {
        let mut model = ShredModel::init(tiny_arch(2), toy_scaling(), 7).unwrap();
        let train_data = linear_samples(64, 10);
        let val_data = linear_samples(16, 20);
        let train_refs: Vec<&LaggedBatch> = train_data.iter().collect();
        let val_refs: Vec<&LaggedBatch> = val_data.iter().collect();
        let config = TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-2,
            patience: 200,
            seed: 3,
        };
        let history = train(&mut model, &train_refs, &val_refs, &config).unwrap();
        let first = history.epochs[0].1;
        let best = history.best_validation_loss;
        assert!(
            best * 10.0 <= first,
            "validation loss {first:.3e} -> {best:.3e} fell short of 10x"
        );
    }

    #[test]
    fn fixed_seed_reproduces_history_bitwise() {
        let train_data = linear_samples(40, 5);
        let val_data = linear_samples(10, 6);
        let train_refs: Vec<&LaggedBatch> = train_data.iter().collect();
        let val_refs: Vec<&LaggedBatch> = val_data.iter().collect();
        let config = TrainConfig {
            epochs: 12,
            batch_size: 8,
            learning_rate: 1e-3,
            patience: 12,
            seed: 99,
        };
        let mut m1 = ShredModel::init(tiny_arch(2), toy_scaling(), 99).unwrap();
        let h1 = train(&mut m1, &train_refs, &val_refs, &config).unwrap();
        let mut m2 = ShredModel::init(tiny_arch(2), toy_scaling(), 99).unwrap();
        let h2 = train(&mut m2, &train_refs, &val_refs, &config).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn early_stopping_restores_best_weights() {
        let mut model = ShredModel::init(tiny_arch(2), toy_scaling(), 21).unwrap();
        let train_data = linear_samples(32, 31);
        let val_data = linear_samples(8, 32);
        let train_refs: Vec<&LaggedBatch> = train_data.iter().collect();
        let val_refs: Vec<&LaggedBatch> = val_data.iter().collect();
        let config = TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 3e-2, // aggressive on purpose
            patience: 5,
            seed: 4,
        };
        let history = train(&mut model, &train_refs, &val_refs, &config).unwrap();
        // Validation loss at the restored epoch is the minimum seen, and
        // never worse than epoch 1.
        let min_seen = history
            .epochs
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(history.best_validation_loss, min_seen);
        assert!(history.best_validation_loss <= history.epochs[0].1);
        let recheck = chunked_loss(&model, &val_refs).unwrap();
        assert!((recheck - history.best_validation_loss).abs() < 1e-15);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let mut model = ShredModel::init(tiny_arch(2), toy_scaling(), 1).unwrap();
        let data = linear_samples(4, 1);
        let refs: Vec<&LaggedBatch> = data.iter().collect();
        assert!(train(&mut model, &refs, &[], &TrainConfig::default()).is_err());
        assert!(train(&mut model, &[], &refs, &TrainConfig::default()).is_err());
    }
}
