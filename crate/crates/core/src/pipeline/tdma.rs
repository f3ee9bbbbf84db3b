//! TDMA velocity unfolding and phase-migration compensation.
//!
//! With transmitters firing one after another, a target moving at radial
//! velocity `v` adds `4 pi v k dt / lambda` to the phase of every channel fed
//! by Tx `k`. Overlapped virtual elements (same position, different Tx) see
//! the same array phase, so their phase difference carries only the motion
//! term. That term, evaluated for each fold hypothesis of the aliased Doppler
//! velocity, selects the unambiguous velocity.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::array::ArrayGeometry;
use crate::error::{Error, Result};
use crate::pipeline::range_doppler::RangeDopplerMap;
use crate::waveform::WaveformConfig;

/// Result of velocity unfolding for one range-Doppler cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldedVelocity {
    pub v_unfolded: f64,
    pub fold_index: i32,
    /// Normalized coherence of the chosen hypothesis, in [-1, 1].
    pub coherence: f64,
}

/// Unfolding search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnfoldParams {
    /// Hypotheses span `-max_fold..=max_fold`; the extended interval is
    /// `(2 max_fold + 1) * v_max`.
    pub max_fold: i32,
    /// Cells whose best coherence is below this are reported ambiguous.
    pub min_coherence: f64,
}

impl Default for UnfoldParams {
    fn default() -> Self {
        // 17.36 / 2.48 = 7 folds of the unambiguous interval
        Self { max_fold: 3, min_coherence: 0.5 }
    }
}

/// Velocity of Doppler bin `d` of an `n_doppler`-bin map (zero at `n/2`).
pub fn doppler_bin_velocity(cfg: &WaveformConfig, n_doppler: usize, d: usize) -> Result<f64> {
    let v_max = cfg.derived()?.v_max;
    Ok((d as f64 - (n_doppler / 2) as f64) * 2.0 * v_max / n_doppler as f64)
}

/// Resolves the Doppler ambiguity of cell `(r, d)` from overlapped-pair phases.
pub fn estimate_unfolded_velocity(
    rd: &RangeDopplerMap,
    cfg: &WaveformConfig,
    geom: &ArrayGeometry,
    cell: (usize, usize),
    params: UnfoldParams,
) -> Result<UnfoldedVelocity> {
    let pairs = geom.overlapped_pairs();
    if pairs.is_empty() {
        return Err(Error::UnsupportedGeometry);
    }
    if geom.n_virtual() != rd.n_vchan {
        return Err(Error::Shape(format!(
            "map has {} channels, geometry {}",
            rd.n_vchan,
            geom.n_virtual()
        )));
    }
    let v_max = cfg.derived()?.v_max;
    let v_bin = doppler_bin_velocity(cfg, rd.n_doppler, cell.1)?;
    let x = rd.cell(cell.0, cell.1);
    let products: Vec<(Complex64, f64)> = pairs
        .iter()
        .map(|p| (x[p.second] * x[p.first].conj(), p.tx_delta as f64))
        .collect();
    let total: f64 = products.iter().map(|(z, _)| z.norm()).sum();
    if total == 0.0 {
        return Err(Error::AmbiguousCell { coherence: 0.0 });
    }
    let k = 4.0 * PI * cfg.tx_step() / cfg.wavelength();
    let mut best = UnfoldedVelocity { v_unfolded: v_bin, fold_index: 0, coherence: f64::NEG_INFINITY };
    // search from fold 0 outward so ties favor the smallest |fold|
    let mut order = vec![0];
    for m in 1..=params.max_fold {
        order.push(-m);
        order.push(m);
    }
    for m in order {
        let v = v_bin + 2.0 * v_max * m as f64;
        let score: f64 = products
            .iter()
            .map(|(z, delta)| (z * Complex64::from_polar(1.0, -k * v * delta)).re)
            .sum::<f64>()
            / total;
        if score > best.coherence {
            best = UnfoldedVelocity { v_unfolded: v, fold_index: m, coherence: score };
        }
    }
    if best.coherence < params.min_coherence {
        return Err(Error::AmbiguousCell { coherence: best.coherence });
    }
    Ok(best)
}

/// Phase factor removing the migration of Tx `tx` for velocity `v`.
#[inline]
fn migration_phasor(cfg: &WaveformConfig, v: f64, tx: usize) -> Complex64 {
    Complex64::from_polar(1.0, -4.0 * PI / cfg.wavelength() * v * tx as f64 * cfg.tx_step())
}

/// Removes the TDMA phase migration of velocity `v` from one channel vector.
pub fn compensate_cell(x: &mut [Complex64], v: f64, cfg: &WaveformConfig, geom: &ArrayGeometry) {
    let phasors: Vec<Complex64> = (0..geom.n_tx()).map(|k| migration_phasor(cfg, v, k)).collect();
    for (xi, ve) in x.iter_mut().zip(geom.virtual_elements()) {
        *xi *= phasors[ve.tx];
    }
}

/// Applies [`compensate_cell`] with one velocity to every cell.
pub fn compensate_tdma_phase(
    rd: &RangeDopplerMap,
    v: f64,
    cfg: &WaveformConfig,
    geom: &ArrayGeometry,
) -> Result<RangeDopplerMap> {
    if !v.is_finite() {
        return Err(Error::Config(format!("velocity must be finite, got {v}")));
    }
    if geom.n_virtual() != rd.n_vchan {
        return Err(Error::Shape("channel count differs from geometry".into()));
    }
    let mut out = rd.clone();
    let phasors: Vec<Complex64> = (0..geom.n_tx()).map(|k| migration_phasor(cfg, v, k)).collect();
    let tx: Vec<usize> = geom.virtual_elements().iter().map(|e| e.tx).collect();
    for cell in out.data.chunks_mut(rd.n_vchan) {
        for (xi, &t) in cell.iter_mut().zip(&tx) {
            *xi *= phasors[t];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::range_doppler::range_doppler_map;
    use crate::simulate::{synthesize_adc, Scatterer, Scene};

    fn cfg() -> WaveformConfig {
        WaveformConfig { n_adc: 64, n_chirps: 16, bandwidth_eff: 35e12 * 64.0 / 12e6, ..WaveformConfig::full_scale() }
    }

    fn peak(rd: &RangeDopplerMap) -> (usize, usize) {
        let mut best = (0, 0, -1.0);
        for r in 0..rd.n_range {
            for d in 0..rd.n_doppler {
                let p = rd.cell_power(r, d);
                if p > best.2 {
                    best = (r, d, p);
                }
            }
        }
        (best.0, best.1)
    }

    fn unfold_at(v: f64) -> UnfoldedVelocity {
        let cfg = cfg();
        let geom = ArrayGeometry::cascade_12x16();
        let scene = Scene {
            scatterers: vec![Scatterer { position: [2.0, 15.0, 0.0], velocity: [0.0, v, 0.0], rcs_amplitude: 1.0 }],
            ..Scene::empty(3)
        };
        let frame = synthesize_adc(&scene, &cfg, &geom, 0.01, 0).unwrap();
        let rd = range_doppler_map(&frame, &cfg, cfg.n_adc).unwrap();
        estimate_unfolded_velocity(&rd, &cfg, &geom, peak(&rd), UnfoldParams::default()).unwrap()
    }

    #[test]
    fn static_target_is_unfolded_to_zero() {
        let u = unfold_at(0.0);
        assert_eq!(u.fold_index, 0);
        assert!(u.v_unfolded.abs() < 0.2);
    }

    #[test]
    fn aliased_targets_recovered() {
        let v_res = cfg().derived().unwrap().v_res;
        for v in [5.0, -6.3, 12.0, 17.0] {
            let u = unfold_at(v);
            // target radial speed is v * cos of its bearing
            let radial = v * 15.0 / (2.0f64 * 2.0 + 15.0 * 15.0).sqrt();
            assert!((u.v_unfolded - radial).abs() < v_res.max(0.1), "{v}: {u:?}");
        }
    }

    #[test]
    fn single_tx_geometry_unsupported() {
        let geom = ArrayGeometry::uniform_linear(4);
        let rd = RangeDopplerMap { n_range: 1, n_doppler: 1, n_vchan: 4, data: vec![Complex64::new(1.0, 0.0); 4] };
        assert_eq!(
            estimate_unfolded_velocity(&rd, &cfg(), &geom, (0, 0), UnfoldParams::default()),
            Err(Error::UnsupportedGeometry)
        );
    }

    #[test]
    fn per_step_phase_matches_closed_form() {
        // v = 2 m/s, dt = 33 us, lambda = 3.947 mm -> 0.2101 rad per Tx step
        let lambda: f64 = 3.947e-3;
        let f0 = crate::waveform::SPEED_OF_LIGHT / lambda;
        let cfg = WaveformConfig { f_start: f0 - 375e6, ..WaveformConfig::full_scale() };
        assert!((cfg.wavelength() - lambda).abs() < 1e-15);
        let step = (migration_phasor(&cfg, 2.0, 0) * migration_phasor(&cfg, 2.0, 1).conj()).arg();
        assert!((step - 0.2101).abs() < 5e-5, "{step}");
    }

    #[test]
    fn zero_velocity_is_identity_and_inverse_restores() {
        let cfg = cfg();
        let geom = ArrayGeometry::cascade_12x16();
        let data: Vec<Complex64> =
            (0..4 * 192).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let rd = RangeDopplerMap { n_range: 2, n_doppler: 2, n_vchan: 192, data };
        assert_eq!(compensate_tdma_phase(&rd, 0.0, &cfg, &geom).unwrap(), rd);
        let fwd = compensate_tdma_phase(&rd, 7.3, &cfg, &geom).unwrap();
        let back = compensate_tdma_phase(&fwd, -7.3, &cfg, &geom).unwrap();
        for (a, b) in rd.data.iter().zip(&back.data) {
            assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
        }
        assert!(compensate_tdma_phase(&rd, f64::NAN, &cfg, &geom).is_err());
    }
}
