//! Fast-time (range) and slow-time (Doppler) transforms.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::types::AdcFrame;
use crate::waveform::WaveformConfig;

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Complex range-Doppler-channel tensor `[R x D x V]`, zero Doppler at
/// bin `D / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub n_range: usize,
    pub n_doppler: usize,
    pub n_vchan: usize,
    pub data: Vec<Complex64>,
}

impl RangeDopplerMap {
    #[inline]
    pub fn offset(&self, r: usize, d: usize) -> usize {
        (r * self.n_doppler + d) * self.n_vchan
    }

    /// Channel vector of one (range, Doppler) cell.
    pub fn cell(&self, r: usize, d: usize) -> &[Complex64] {
        let o = self.offset(r, d);
        &self.data[o..o + self.n_vchan]
    }

    pub fn cell_mut(&mut self, r: usize, d: usize) -> &mut [Complex64] {
        let o = self.offset(r, d);
        &mut self.data[o..o + self.n_vchan]
    }

    /// Power summed over channels.
    pub fn cell_power(&self, r: usize, d: usize) -> f64 {
        self.cell(r, d).iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn total_power(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }
}

/// Hamming window and FFT along fast time (zero-padded to `range_fft`) and
/// per-Tx slow time. With complex sampling every range bin is a positive
/// beat; bin `i` corresponds to range `i * r_max / range_fft`.
pub fn range_doppler_map(frame: &AdcFrame, cfg: &WaveformConfig, range_fft: usize) -> Result<RangeDopplerMap> {
    frame.check()?;
    if frame.n_fast != cfg.n_adc || frame.n_slow != cfg.n_chirps {
        return Err(Error::Shape(format!(
            "frame {}x{} does not match waveform {}x{}",
            frame.n_fast, frame.n_slow, cfg.n_adc, cfg.n_chirps
        )));
    }
    if range_fft < frame.n_fast {
        return Err(Error::Shape(format!("range_fft {range_fft} < n_adc {}", frame.n_fast)));
    }
    let (nf, ns, nv) = (frame.n_fast, frame.n_slow, frame.n_vchan);
    let wf = hamming(nf);
    let ws = hamming(ns);
    let mut planner = FftPlanner::<f64>::new();
    let fft_r = planner.plan_fft_forward(range_fft);
    let fft_d = planner.plan_fft_forward(ns);

    // range pass: [range_fft x S x V]
    let mut ranged = vec![Complex64::new(0.0, 0.0); range_fft * ns * nv];
    let mut buf = vec![Complex64::new(0.0, 0.0); range_fft];
    for s in 0..ns {
        for v in 0..nv {
            buf.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            for n in 0..nf {
                buf[n] = frame.at(n, s, v) * wf[n];
            }
            fft_r.process(&mut buf);
            for (r, x) in buf.iter().enumerate() {
                ranged[(r * ns + s) * nv + v] = *x;
            }
        }
    }

    // Doppler pass, shifted so that zero velocity sits at ns / 2
    let half = ns / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); range_fft * ns * nv];
    let mut buf = vec![Complex64::new(0.0, 0.0); ns];
    for r in 0..range_fft {
        for v in 0..nv {
            for s in 0..ns {
                buf[s] = ranged[(r * ns + s) * nv + v] * ws[s];
            }
            fft_d.process(&mut buf);
            for (k, x) in buf.iter().enumerate() {
                let d = (k + half) % ns;
                out[(r * ns + d) * nv + v] = *x;
            }
        }
    }
    Ok(RangeDopplerMap { n_range: range_fft, n_doppler: ns, n_vchan: nv, data: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ArrayGeometry;
    use crate::simulate::{synthesize_adc, Scatterer, Scene};

    fn scene(pos: [f64; 3], vel: [f64; 3]) -> Scene {
        Scene {
            scatterers: vec![Scatterer { position: pos, velocity: vel, rcs_amplitude: 1.0 }],
            ..Scene::empty(2)
        }
    }

    fn argmax_cell(rd: &RangeDopplerMap, chan: usize) -> (usize, usize) {
        let mut best = (0, 0, f64::MIN);
        for r in 0..rd.n_range {
            for d in 0..rd.n_doppler {
                let p = rd.cell(r, d)[chan].norm_sqr();
                if p > best.2 {
                    best = (r, d, p);
                }
            }
        }
        (best.0, best.1)
    }

    #[test]
    fn hamming_shape() {
        let w = hamming(5);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[2] - 1.0).abs() < 1e-12);
        assert_eq!(hamming(1), vec![1.0]);
    }

    #[test]
    fn static_boresight_target_peaks_at_range_bin_50() {
        let cfg = WaveformConfig { n_chirps: 16, n_tx: 1, n_rx: 4, ..WaveformConfig::full_scale() };
        let geom = ArrayGeometry::uniform_linear(4);
        let frame = synthesize_adc(&scene([0.0, 10.0, 0.0], [0.0; 3]), &cfg, &geom, 0.0, 0).unwrap();
        let rd = range_doppler_map(&frame, &cfg, cfg.n_adc).unwrap();
        // beat frequency 2 * 10 * slope / c sits at bin f_b / f_s * N
        let expect = (cfg.beat_frequency(10.0) / cfg.f_s * cfg.n_adc as f64).round() as usize;
        assert_eq!(expect, 50);
        for ch in 0..4 {
            assert_eq!(argmax_cell(&rd, ch), (50, 8));
        }
    }

    #[test]
    fn radial_velocity_shifts_doppler_bin() {
        let cfg = WaveformConfig { n_chirps: 32, n_tx: 1, n_rx: 1, ..WaveformConfig::full_scale() };
        let geom = ArrayGeometry::uniform_linear(1);
        let d = cfg.derived().unwrap();
        // single Tx: v_max = lambda / (4 * 33 us) ~ 29.7 m/s, bin width 2 v_max / 32
        let v = 1.0 * 2.0 * d.v_max / 32.0 * 5.0;
        let frame = synthesize_adc(&scene([0.0, 10.0, 0.0], [0.0, v, 0.0]), &cfg, &geom, 0.0, 0).unwrap();
        let rd = range_doppler_map(&frame, &cfg, cfg.n_adc).unwrap();
        let (_, dbin) = argmax_cell(&rd, 0);
        assert_eq!(dbin, 16 + (v / d.v_res).round() as usize);
    }

    #[test]
    fn zero_frame_gives_zero_map() {
        let frame = AdcFrame::zeros(64, 8, 3, 1, 0.0);
        let cfg = WaveformConfig {
            n_adc: 64,
            n_chirps: 8,
            n_tx: 1,
            n_rx: 3,
            bandwidth_eff: 35e12 * 64.0 / 12e6,
            ..WaveformConfig::full_scale()
        };
        let rd = range_doppler_map(&frame, &cfg, 128).unwrap();
        assert_eq!(rd.n_range, 128);
        assert!(rd.data.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn parseval_holds_for_windowed_input() {
        let cfg = WaveformConfig { n_chirps: 8, n_tx: 12, n_rx: 16, ..WaveformConfig::full_scale() };
        let geom = ArrayGeometry::cascade_12x16();
        let frame = synthesize_adc(&scene([3.0, 12.0, 1.0], [0.0, 4.0, 0.0]), &cfg, &geom, 0.5, 1).unwrap();
        let rd = range_doppler_map(&frame, &cfg, 512).unwrap();
        let (wf, ws) = (hamming(cfg.n_adc), hamming(cfg.n_chirps));
        let mut windowed = 0.0;
        for n in 0..frame.n_fast {
            for s in 0..frame.n_slow {
                for v in 0..frame.n_vchan {
                    windowed += (frame.at(n, s, v) * wf[n] * ws[s]).norm_sqr();
                }
            }
        }
        let expected = windowed * 512.0 * cfg.n_chirps as f64;
        assert!(((rd.total_power() - expected) / expected).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let frame = AdcFrame::zeros(32, 8, 1, 1, 0.0);
        let cfg = WaveformConfig { n_tx: 1, n_rx: 1, ..WaveformConfig::full_scale() };
        assert!(matches!(range_doppler_map(&frame, &cfg, 256), Err(Error::Shape(_))));
    }
}
