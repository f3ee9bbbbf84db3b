//! Focal loss on logits and a plain binary cross-entropy reference.

use super::tensor::{cast, Scalar, Tensor};

const LOG_FLOOR: f64 = 1e-12;

/// `ln(sigmoid(x))`, stable for large |x|.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-voxel focal loss and its derivative w.r.t. the logit.
#[inline]
fn focal_voxel(z: f64, y: f64, alpha: f64, gamma: f64) -> (f64, f64) {
    let positive = y > 0.5;
    let (s, a_t) = if positive { (1.0, alpha) } else { (-1.0, 1.0 - alpha) };
    let p_t = sigmoid(s * z);
    let q = sigmoid(-s * z); // 1 - p_t without cancellation
    let raw_log = log_sigmoid(s * z);
    let clamped = raw_log < LOG_FLOOR.ln();
    let log_pt = if clamped { LOG_FLOOR.ln() } else { raw_log };
    let mod_ = if gamma == 0.0 { 1.0 } else { q.powf(gamma) };
    let loss = -a_t * mod_ * log_pt;
    // d/dz of -a_t q^g log p_t with dp_t/dz = s p_t q
    let mut inner = -gamma * mod_ * p_t * log_pt;
    if !clamped {
        inner += mod_ * q;
    }
    (loss, -a_t * s * inner)
}

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Mean focal loss over all voxels; targets are 0/1.
pub fn focal_loss<F: Scalar>(logits: &Tensor<F>, target: &Tensor<F>, alpha: f64, gamma: f64) -> f64 {
    assert_eq!(logits.shape, target.shape, "focal loss shapes");
    let terms = logits
        .data
        .iter()
        .zip(&target.data)
        .map(|(z, y)| focal_voxel(z.to_f64().unwrap(), y.to_f64().unwrap(), alpha, gamma).0);
    compensated_sum(terms) / logits.len() as f64
}

/// Mean focal loss and its gradient w.r.t. the logits.
pub fn focal_loss_grad<F: Scalar>(logits: &Tensor<F>, target: &Tensor<F>, alpha: f64, gamma: f64) -> (f64, Tensor<F>) {
    assert_eq!(logits.shape, target.shape, "focal loss shapes");
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(&logits.shape);
    for ((z, y), g) in logits.data.iter().zip(&target.data).zip(grad.data.iter_mut()) {
        let (l, d) = focal_voxel(z.to_f64().unwrap(), y.to_f64().unwrap(), alpha, gamma);
        total += l;
        *g = cast(d / n);
    }
    (total / n, grad)
}

/// Mean binary cross-entropy on logits: `max(z, 0) - z y + ln(1 + e^-|z|)`.
pub fn binary_cross_entropy<F: Scalar>(logits: &Tensor<F>, target: &Tensor<F>) -> f64 {
    let total: f64 = logits
        .data
        .iter()
        .zip(&target.data)
        .map(|(z, y)| {
            let (z, y) = (z.to_f64().unwrap(), y.to_f64().unwrap());
            z.max(0.0) - z * y + (1.0 + (-z.abs()).exp()).ln()
        })
        .sum();
    total / logits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn hand_value() {
        let l = focal_loss(&t(&[0.0]), &t(&[1.0]), 0.25, 2.0);
        assert!((l - 0.25 * 0.25 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l - 0.0433217).abs() < 1e-7);
    }

    #[test]
    fn gamma_zero_is_half_cross_entropy() {
        let z = t(&[-3.0, -0.2, 0.0, 0.7, 4.0, 9.0]);
        let y = t(&[0.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        let f = focal_loss(&z, &y, 0.5, 0.0);
        assert!((f - 0.5 * binary_cross_entropy(&z, &y)).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        assert!(focal_loss(&t(&[30.0, -30.0]), &t(&[1.0, 0.0]), 0.75, 2.0) < 1e-20);
        assert!(focal_loss(&t(&[-1.0, 2.0]), &t(&[1.0, 0.0]), 0.75, 2.0) > 0.0);
    }

    #[test]
    fn gradient_matches_central_difference() {
        for (z, y) in [(-2.0, 0.0), (-2.0, 1.0), (0.3, 1.0), (1.5, 0.0), (-35.0, 1.0)] {
            for gamma in [0.0, 0.5, 2.0] {
                let (_, g) = focal_loss_grad(&t(&[z]), &t(&[y]), 0.3, gamma);
                let h = 1e-6;
                let num = (focal_loss(&t(&[z + h]), &t(&[y]), 0.3, gamma) - focal_loss(&t(&[z - h]), &t(&[y]), 0.3, gamma))
                    / (2.0 * h);
                assert!((g.data[0] - num).abs() < 1e-7 * num.abs().max(1.0), "{z} {y} {gamma}: {} vs {num}", g.data[0]);
            }
        }
    }
}
