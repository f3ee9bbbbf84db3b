//! Adam optimizer and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::InputTensor;
use super::loss::{focal_loss, focal_loss_grad};
use super::model::DetectorModel;
use super::tensor::{cast, Scalar, Tensor};
use super::DetectorConfig;
use crate::error::{Error, Result};

/// One input window with its `[E, T, R, A]` target.
#[derive(Debug, Clone)]
pub struct TrainingWindow<F> {
    pub input: InputTensor<F>,
    pub target: Tensor<F>,
}

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: &[Tensor<F>], lr: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(&p.shape)).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut [Tensor<F>], grads: &[Tensor<F>]) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (fb1, fb2, feps) = (cast::<F>(b1), cast::<F>(b2), cast::<F>(self.eps));
        let (one_b1, one_b2) = (cast::<F>(1.0 - b1), cast::<F>(1.0 - b2));
        let lr_t = cast::<F>(self.lr * c2.sqrt() / c1);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = fb1 * m.data[i] + one_b1 * gi;
                v.data[i] = fb2 * v.data[i] + one_b2 * gi * gi;
                p.data[i] = p.data[i] - lr_t * m.data[i] / (v.data[i].sqrt() + feps);
            }
        }
    }
}

/// Mean training and validation loss per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
    pub steps: usize,
}

/// Loss of one window, and its gradients.
pub fn loss_and_grads<F: Scalar>(model: &DetectorModel<F>, w: &TrainingWindow<F>) -> Result<(f64, Vec<Tensor<F>>)> {
    let out = model.forward(&w.input)?;
    let (loss, dlogits) = focal_loss_grad(&out.logits, &w.target, model.config.alpha, model.config.gamma);
    let mut grads = model.zero_grads();
    model.backward(&out, &dlogits, &mut grads);
    Ok((loss, grads))
}

pub fn mean_loss<F: Scalar>(model: &DetectorModel<F>, windows: &[TrainingWindow<F>]) -> Result<f64> {
    if windows.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for w in windows {
        let out = model.forward(&w.input)?;
        total += focal_loss(&out.logits, &w.target, model.config.alpha, model.config.gamma);
    }
    Ok(total / windows.len() as f64)
}

/// Trains a freshly initialized model.
pub fn train_detector<F: Scalar>(
    train: &[TrainingWindow<F>],
    val: &[TrainingWindow<F>],
    cfg: &DetectorConfig,
) -> Result<(DetectorModel<F>, TrainLog)> {
    let mut model = DetectorModel::new(cfg)?;
    let log = train_model(&mut model, train, val, cfg.epochs)?;
    Ok((model, log))
}

/// Runs `epochs` passes of Adam over `train` (seeded shuffle, mini-batches of
/// `batch_size` windows with averaged gradients).
pub fn train_model<F: Scalar>(
    model: &mut DetectorModel<F>,
    train: &[TrainingWindow<F>],
    val: &[TrainingWindow<F>],
    epochs: usize,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::Config("training needs at least one window".into()));
    }
    let cfg = model.config.clone();
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7EA1_5EED);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = model.zero_grads();
            for &i in batch {
                let (loss, grads) = loss_and_grads(model, &train[i])?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { step: log.steps, loss });
                }
                epoch_loss += loss;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
            let scale = cast::<F>(1.0 / batch.len() as f64);
            for a in &mut acc {
                a.data.iter_mut().for_each(|x| *x = *x * scale);
            }
            adam.step(&mut model.params, &acc);
            log.steps += 1;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = mean_loss(model, val)?;
        log::info!("epoch {epoch}: train loss {train_loss:.6}, val loss {val_loss:.6}");
        log.epoch_train_loss.push(train_loss);
        log.epoch_val_loss.push(val_loss);
    }
    Ok(log)
}

/// Seeded scene-level split: returns (train scenes, validation scenes), with
/// at least one training scene.
pub fn split_by_scene(n_scenes: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n_scenes).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n_scenes as f64 * val_fraction).round() as usize).min(n_scenes.saturating_sub(1));
    let val = ids.split_off(n_scenes - n_val);
    ids.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (ids, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_with_zero_rate_leaves_parameters() {
        let mut p = vec![Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap()];
        let g = vec![Tensor::from_vec(&[3], vec![0.3, 0.1, -4.0]).unwrap()];
        let before = p.clone();
        let mut adam = Adam::new(&p, 0.0);
        adam.step(&mut p, &g);
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::from_vec(&[2], vec![1.0f64, 1.0]).unwrap()];
        let g = vec![Tensor::from_vec(&[2], vec![5.0, -0.01]).unwrap()];
        Adam::new(&p, 0.1).step(&mut p, &g);
        assert!((p[0].data[0] - 0.9).abs() < 1e-6);
        assert!((p[0].data[1] - 1.1).abs() < 1e-4);
    }

    #[test]
    fn scene_split() {
        let (tr, va) = split_by_scene(20, 0.1, 3);
        assert_eq!((tr.len(), va.len()), (18, 2));
        assert!(va.iter().all(|v| !tr.contains(v)));
        assert_eq!(split_by_scene(1, 0.5, 0).0, vec![0]);
    }
}
