//! The single JSON configuration file.
//!
//! Every section is optional and every field inside a section may be given
//! alone: the file is merged field by field over the defaults.

use std::path::Path;

use radelft_core::cfar::CfarConfig;
use radelft_core::groundtruth::GroundParams;
use radelft_core::neural::DetectorConfig;
use radelft_core::pipeline::ProcessingConfig;
use radelft_core::simulate::RandomSceneConfig;
use radelft_core::{ArrayGeometry, GridConfig, PolarGrid, WaveformConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{FormatError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub waveform: WaveformConfig,
    pub array: ArrayGeometry,
    pub grid: GridConfig,
    pub processing: ProcessingConfig,
    pub simulate: SimulateConfig,
    pub ground: GroundParams,
    pub cfar: CascadeConfig,
    pub detector: DetectorConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Complex noise power per ADC sample.
    pub noise_power: f64,
    /// Used when no scene file is given.
    pub random_scene: RandomSceneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub range_azimuth: CfarConfig,
    pub doppler: CfarConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Largest radar / ground-truth timestamp difference accepted when pairing (s).
    pub max_skew: f64,
    /// Thresholds of the probability sweep.
    pub roc_thresholds: Vec<f64>,
    /// Meters per pixel of the bird's-eye-view images.
    pub bev_resolution: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            waveform: WaveformConfig::desk_scale(),
            array: ArrayGeometry::cascade_12x16(),
            grid: GridConfig::desk_scale(),
            processing: ProcessingConfig::default(),
            simulate: SimulateConfig { noise_power: 1.0, random_scene: RandomSceneConfig::default() },
            ground: GroundParams::default(),
            cfar: CascadeConfig {
                range_azimuth: CfarConfig::cascade_range_azimuth(),
                doppler: CfarConfig::cascade_doppler(),
            },
            detector: DetectorConfig::default(),
            eval: EvalConfig {
                max_skew: 0.05,
                roc_thresholds: (1..20).map(|i| i as f64 * 0.05).collect(),
                bev_resolution: 0.2,
            },
        }
    }
}

/// Recursively overlays `patch` on `base`; objects merge, everything else
/// replaces. Keys absent from `base` are rejected.
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = format!("{path}.{k}");
                match b.get_mut(&k) {
                    Some(slot) if !slot.is_null() => merge(slot, v, &here)?,
                    Some(slot) => *slot = v,
                    None => return Err(FormatError::Invalid(format!("unknown config key '{}'", &here[1..]))),
                }
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let patch: Value = serde_json::from_str(text)?;
        let mut value = serde_json::to_value(Config::default())?;
        merge(&mut value, patch, "")?;
        let cfg: Config = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_json(&std::fs::read_to_string(p).map_err(|e| FormatError::io(p, e))?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        self.array.check_tx_count(self.waveform.n_tx, self.waveform.n_rx)?;
        self.polar_grid()?;
        self.cfar.range_azimuth.validate()?;
        self.cfar.doppler.validate()?;
        self.detector.validate()?;
        if !(self.simulate.noise_power >= 0.0 && self.simulate.noise_power.is_finite()) {
            return Err(FormatError::Invalid(format!("noise_power {} must be >= 0", self.simulate.noise_power)));
        }
        if !(self.eval.max_skew >= 0.0) || !(self.eval.bev_resolution > 0.0) {
            return Err(FormatError::Invalid("max_skew must be >= 0 and bev_resolution > 0".into()));
        }
        Ok(())
    }

    pub fn polar_grid(&self) -> Result<PolarGrid> {
        Ok(PolarGrid::from_config(&self.waveform, &self.grid)?)
    }

    /// The grid the detector predicts on (elevation collapsed under `no_elevation`).
    pub fn detector_grid(&self) -> Result<PolarGrid> {
        let g = self.polar_grid()?;
        Ok(if self.detector.ablations.no_elevation { g.without_elevation() } else { g })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    }

    #[test]
    fn single_field_override() {
        let cfg = Config::from_json(r#"{"detector": {"gamma": 0.5}, "cfar": {"doppler": {"n_train": 4}}}"#).unwrap();
        assert_eq!(cfg.detector.gamma, 0.5);
        assert_eq!(cfg.detector.alpha, 0.75);
        assert_eq!(cfg.cfar.doppler.n_train, 4);
        assert_eq!(cfg.cfar.doppler.target_pfa, 1e-4);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Config::from_json(r#"{"detektor": {}}"#).is_err());
        assert!(Config::from_json(r#"{"detector": {"gama": 1.0}}"#).is_err());
        assert!(Config::from_json(r#"{"detector": {"alpha": 2.0}}"#).is_err());
        assert!(Config::from_json(r#"{"grid": {"n_range": 100000}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = Config::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), cfg);
    }
}
