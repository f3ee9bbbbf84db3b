//! Central-difference verification of the analytic gradients.

use super::input::InputTensor;
use super::loss::{focal_loss, focal_loss_grad};
use super::model::DetectorModel;
use super::tensor::Tensor;
use crate::error::Result;

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over
/// every parameter element.
pub fn gradient_check(
    model: &DetectorModel<f64>,
    input: &InputTensor<f64>,
    target: &Tensor<f64>,
    eps: f64,
) -> Result<f64> {
    let (alpha, gamma) = (model.config.alpha, model.config.gamma);
    let out = model.forward(input)?;
    let (_, dlogits) = focal_loss_grad(&out.logits, target, alpha, gamma);
    let mut grads = model.zero_grads();
    model.backward(&out, &dlogits, &mut grads);

    let mut probe = model.clone();
    let mut loss_at = |p: usize, i: usize, v: f64| -> Result<f64> {
        probe.params[p].data[i] = v;
        let l = focal_loss(&probe.forward(input)?.logits, target, alpha, gamma);
        Ok(l)
    };
    let mut worst: f64 = 0.0;
    for p in 0..model.params.len() {
        for i in 0..model.params[p].len() {
            let w = model.params[p].data[i];
            let plus = loss_at(p, i, w + eps)?;
            let minus = loss_at(p, i, w - eps)?;
            loss_at(p, i, w)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads[p].data[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Ablations, DetectorConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(seed: u64, activation: Activation) -> DetectorConfig {
        DetectorConfig {
            frames: 2,
            doppler_channels: 4,
            backbone_channels: [3, 4, 4],
            temporal_hidden: 2,
            elevation_bins: 3,
            activation,
            seed,
            ..DetectorConfig::default()
        }
    }

    /// Random unit-variance-preserving parameters everywhere, so no layer is
    /// trivially zero and logits stay of order one.
    fn randomized(cfg: &DetectorConfig, rng: &mut ChaCha8Rng) -> DetectorModel<f64> {
        let mut m = DetectorModel::<f64>::new(cfg).unwrap();
        for p in &mut m.params {
            let fan_in: usize = p.shape[1..].iter().product::<usize>().max(1);
            let lim = if p.shape.len() == 1 { 0.1 } else { (3.0 / fan_in as f64).sqrt() };
            p.data.iter_mut().for_each(|w| *w = rng.random_range(-lim..lim));
        }
        m
    }

    fn sample(rng: &mut ChaCha8Rng, t: usize, d: usize, r: usize, a: usize, e: usize) -> (InputTensor<f64>, Tensor<f64>) {
        let n = t * 2 * d * r * a;
        let x = Tensor::from_vec(&[t, 2, d, r, a], (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..e * t * r * a).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        (InputTensor::from_tensor(x).unwrap(), Tensor::from_vec(&[e, t, r, a], y).unwrap())
    }

    #[test]
    fn random_tiny_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = tiny(1, Activation::Elu);
        let m = randomized(&cfg, &mut rng);
        let (x, y) = sample(&mut rng, 2, 4, 5, 6, 3);
        let err = gradient_check(&m, &x, &y, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    /// Without nonlinearities the only error left is the rounding floor of the
    /// difference quotient, about `ulp(loss) / eps` in absolute terms.
    #[test]
    fn linear_model_is_near_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = DetectorConfig { gamma: 0.0, ..tiny(2, Activation::Identity) };
        let m = randomized(&cfg, &mut rng);
        let (x, y) = sample(&mut rng, 2, 4, 4, 4, 3);
        let err = gradient_check(&m, &x, &y, 1e-4).unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn zero_input_zero_target() {
        let cfg = DetectorConfig { ablations: Ablations { no_doppler: true, ..Default::default() }, ..tiny(3, Activation::Elu) };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = randomized(&cfg, &mut rng);
        let x = InputTensor::from_tensor(Tensor::zeros(&[2, 2, 1, 4, 4])).unwrap();
        let y = Tensor::zeros(&[3, 2, 4, 4]);
        let err = gradient_check(&m, &x, &y, 1e-5).unwrap();
        assert!(err.is_finite() && err < 1e-4, "max relative error {err}");
    }
}
