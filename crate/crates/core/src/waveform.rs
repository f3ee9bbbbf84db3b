//! FMCW chirp parameters and the closed-form resolution/ambiguity quantities
//! derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance for `bandwidth_eff` against `slope * n_adc / f_s`.
const BANDWIDTH_TOLERANCE: f64 = 1e-2;

/// Waveform of a TDMA-MIMO FMCW radar. All quantities in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Chirp start frequency (Hz).
    pub f_start: f64,
    /// Bandwidth swept during ADC sampling (Hz).
    pub bandwidth_eff: f64,
    /// Chirp slope (Hz/s).
    pub slope: f64,
    /// Ramp duration (s).
    pub chirp_len: f64,
    /// Idle time between ramps (s).
    pub idle: f64,
    /// ADC samples per chirp.
    pub n_adc: usize,
    /// Chirps per transmitter per frame (slow-time samples after de-interleaving).
    pub n_chirps: usize,
    /// ADC sampling rate (samples/s).
    pub f_s: f64,
    pub n_tx: usize,
    pub n_rx: usize,
}

/// Resolution and ambiguity limits implied by a [`WaveformConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub range_res: f64,
    pub r_max: f64,
    pub v_max: f64,
    pub v_res: f64,
    pub pri: f64,
}

impl WaveformConfig {
    /// The waveform used for the published recordings: 76 GHz start, 35 MHz/us,
    /// 256 samples at 12 Msps, 128 chirps, 12 Tx in TDMA, 16 Rx.
    pub fn full_scale() -> Self {
        Self {
            f_start: 76e9,
            bandwidth_eff: 750e6,
            slope: 35e12,
            chirp_len: 28e-6,
            idle: 5e-6,
            n_adc: 256,
            n_chirps: 128,
            f_s: 12e6,
            n_tx: 12,
            n_rx: 16,
        }
    }

    /// Same timing and array as full scale (so `v_max` is unchanged) with
    /// 32 chirps per Tx.
    pub fn desk_scale() -> Self {
        Self {
            n_chirps: 32,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_start", self.f_start),
            ("bandwidth_eff", self.bandwidth_eff),
            ("slope", self.slope),
            ("chirp_len", self.chirp_len),
            ("f_s", self.f_s),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.idle.is_finite() && self.idle >= 0.0) {
            return Err(Error::Config(format!("idle must be non-negative, got {}", self.idle)));
        }
        for (name, value) in [
            ("n_adc", self.n_adc),
            ("n_chirps", self.n_chirps),
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
        ] {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let swept = self.slope * self.n_adc as f64 / self.f_s;
        if ((swept - self.bandwidth_eff) / self.bandwidth_eff).abs() > BANDWIDTH_TOLERANCE {
            return Err(Error::Config(format!(
                "bandwidth_eff {} Hz inconsistent with slope*n_adc/f_s = {swept} Hz",
                self.bandwidth_eff
            )));
        }
        Ok(())
    }

    /// Carrier (center) frequency `f_start + B/2`.
    pub fn center_frequency(&self) -> f64 {
        self.f_start + self.bandwidth_eff / 2.0
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    /// Time between consecutive chirps of different transmitters.
    pub fn tx_step(&self) -> f64 {
        self.chirp_len + self.idle
    }

    /// Repetition interval of one transmitter.
    pub fn pri(&self) -> f64 {
        self.n_tx as f64 * self.tx_step()
    }

    pub fn derived(&self) -> Result<DerivedQuantities> {
        self.validate()?;
        let pri = self.pri();
        let lambda = self.wavelength();
        Ok(DerivedQuantities {
            range_res: SPEED_OF_LIGHT / (2.0 * self.bandwidth_eff),
            r_max: self.f_s * SPEED_OF_LIGHT / (2.0 * self.slope),
            v_max: SPEED_OF_LIGHT / (4.0 * self.center_frequency() * pri),
            v_res: lambda / (2.0 * self.n_chirps as f64 * pri),
            pri,
        })
    }

    /// Beat frequency of a reflector at `range`.
    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * range * self.slope / SPEED_OF_LIGHT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn full_scale_derived_values() {
        let d = WaveformConfig::full_scale().derived().unwrap();
        assert!(rel(d.range_res, 0.2) < 0.005, "{}", d.range_res);
        assert!(rel(d.r_max, 51.4) < 0.005, "{}", d.r_max);
        assert!(rel(d.v_max, 2.48) < 0.02, "{}", d.v_max);
        assert!(rel(d.pri, 12.0 * 33e-6) < 1e-12);
        // lambda / (2 * 128 * 396 us) with f_c = 76.375 GHz
        let expected_vres = SPEED_OF_LIGHT / 76.375e9 / (2.0 * 128.0 * 396e-6);
        assert!(rel(d.v_res, expected_vres) < 1e-12);
    }

    #[test]
    fn single_tx_vmax_is_direct_evaluation() {
        let cfg = WaveformConfig { n_tx: 1, ..WaveformConfig::full_scale() };
        let d = cfg.derived().unwrap();
        let expected = SPEED_OF_LIGHT / (4.0 * 76.375e9 * 33e-6);
        assert!(rel(d.v_max, expected) < 1e-12);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let mut cfg = WaveformConfig::full_scale();
        cfg.slope = 0.0;
        assert!(matches!(cfg.derived(), Err(Error::Config(_))));
        let mut cfg = WaveformConfig::full_scale();
        cfg.n_tx = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = WaveformConfig::full_scale();
        cfg.bandwidth_eff = 900e6;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derived_is_pure() {
        let cfg = WaveformConfig::desk_scale();
        let a = cfg.derived().unwrap();
        let b = cfg.clone().derived().unwrap();
        assert_eq!(a.v_max.to_bits(), b.v_max.to_bits());
        assert_eq!(a.v_res.to_bits(), b.v_res.to_bits());
        assert_eq!(a, b);
    }
}
