//! Learned occupancy detector: a Doppler encoder and an encoder-decoder
//! backbone shared across frames, a temporal head over stacked frames,
//! focal loss and Adam training. Written directly on dense tensors with
//! hand-derived backward passes.

pub mod gradcheck;
pub mod input;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradcheck::gradient_check;
pub use input::{build_input, build_target, quantile, InputTensor};
pub use layers::{Activation, Conv3dSpec};
pub use loss::{binary_cross_entropy, focal_loss, focal_loss_grad};
pub use model::{predict_occupancy, predict_probabilities, DetectorModel, ForwardOutput};
pub use tensor::{Scalar, Tensor};
pub use train::{split_by_scene, train_detector, train_model, Adam, TrainLog, TrainingWindow};

/// Ablation switches; each removes one ingredient of the full detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablations {
    /// Average the Doppler axis away and drop the Doppler encoder.
    #[serde(default)]
    pub no_doppler: bool,
    /// Floor input cells below the per-frame 0.9 power quantile.
    #[serde(default)]
    pub quantile_prefilter: bool,
    /// Drop the temporal head; frames are predicted independently.
    #[serde(default)]
    pub no_time: bool,
    /// Single elevation bin (azimuth-only array rows).
    #[serde(default)]
    pub no_elevation: bool,
}

impl Ablations {
    pub fn parse_list(names: &[String]) -> Result<Self> {
        let mut a = Self::default();
        for n in names {
            match n.as_str() {
                "no_doppler" => a.no_doppler = true,
                "quantile" | "quantile_prefilter" => a.quantile_prefilter = true,
                "no_time" => a.no_time = true,
                "no_elevation" => a.no_elevation = true,
                other => return Err(Error::Config(format!("unknown ablation '{other}'"))),
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Frames per input window (T).
    pub frames: usize,
    /// Doppler encoder output channels (C); the first layer has C / 2.
    pub doppler_channels: usize,
    /// Encoder kernel over (Doppler, range, azimuth).
    pub doppler_kernel: [usize; 3],
    /// Encoder stride along Doppler.
    pub doppler_stride: usize,
    /// Backbone widths at full, 1/2 and 1/4 resolution.
    pub backbone_channels: [usize; 3],
    pub backbone_kernel: usize,
    pub temporal_hidden: usize,
    pub temporal_kernel: [usize; 3],
    /// Elevation bins E predicted per (range, azimuth) cell.
    pub elevation_bins: usize,
    pub activation: Activation,
    pub alpha: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub prob_threshold: f64,
    /// Occupancy prior used to initialize the output bias.
    pub init_prior: f64,
    pub seed: u64,
    pub ablations: Ablations,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            frames: 3,
            doppler_channels: 64,
            doppler_kernel: [3, 3, 3],
            doppler_stride: 2,
            backbone_channels: [16, 32, 64],
            backbone_kernel: 3,
            temporal_hidden: 16,
            temporal_kernel: [3, 3, 3],
            elevation_bins: 16,
            activation: Activation::Elu,
            alpha: 0.75,
            gamma: 2.0,
            learning_rate: 1e-3,
            batch_size: 1,
            epochs: 10,
            prob_threshold: 0.5,
            init_prior: 0.01,
            seed: 0,
            ablations: Ablations::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames < 1 {
            return bad("frames must be at least 1".into());
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma {} must be >= 0", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return bad(format!("prob_threshold {} outside (0, 1)", self.prob_threshold));
        }
        if !(self.init_prior > 0.0 && self.init_prior < 1.0) {
            return bad(format!("init_prior {} outside (0, 1)", self.init_prior));
        }
        if self.doppler_channels < 2 || self.backbone_channels.contains(&0) || self.temporal_hidden == 0 {
            return bad("channel widths must be positive (Doppler channels >= 2)".into());
        }
        if self.doppler_stride == 0 || self.doppler_kernel.contains(&0) || self.temporal_kernel.contains(&0) {
            return bad("kernels and strides must be positive".into());
        }
        if self.backbone_kernel % 2 == 0 || self.doppler_kernel[1..].iter().chain(&self.temporal_kernel).any(|k| k % 2 == 0)
        {
            return bad("spatial kernels must be odd to preserve size".into());
        }
        if self.elevation_bins == 0 || self.batch_size == 0 {
            return bad("elevation_bins and batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        Ok(())
    }

    /// Elevation bins actually predicted (1 under `no_elevation`).
    pub fn output_bins(&self) -> usize {
        if self.ablations.no_elevation {
            1
        } else {
            self.elevation_bins
        }
    }
}
