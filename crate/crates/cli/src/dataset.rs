//! Simulated frames with their supervision, and the sliding frame windows
//! the detector consumes.

use radelft_core::groundtruth::{crop_fov, remove_ground, voxelize, GroundParams};
use radelft_core::neural::{build_input, build_target, predict_occupancy, predict_probabilities as window_probabilities, Ablations, DetectorModel, Scalar, TrainingWindow};
use radelft_core::pipeline::{process_frame, ProcessingConfig};
use radelft_core::simulate::{sample_ground_truth, synthesize_adc, Scene};
use radelft_core::{AdcFrame, ArrayGeometry, OccupancyGrid, PointCloud, PolarGrid, RadarCube, WaveformConfig};
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{FormatError, Result};

/// Everything needed to turn a scene into radar cubes and labels.
#[derive(Debug, Clone)]
pub struct Setup {
    pub waveform: WaveformConfig,
    pub array: ArrayGeometry,
    pub grid: PolarGrid,
    pub processing: ProcessingConfig,
    pub ground: GroundParams,
    pub noise_power: f64,
}

impl Setup {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(Self {
            waveform: cfg.waveform.clone(),
            array: cfg.array.clone(),
            grid: cfg.polar_grid()?,
            processing: cfg.processing.clone(),
            ground: cfg.ground.clone(),
            noise_power: cfg.simulate.noise_power,
        })
    }

    pub fn simulate(&self, scene: &Scene, frame: usize) -> Result<(AdcFrame, PointCloud)> {
        let adc = synthesize_adc(scene, &self.waveform, &self.array, self.noise_power, frame)?;
        Ok((adc, sample_ground_truth(scene, frame)))
    }

    pub fn process(&self, adc: &AdcFrame) -> Result<RadarCube> {
        Ok(process_frame(adc, &self.waveform, &self.array, &self.grid, &self.processing)?)
    }

    /// Ground-truth cloud restricted to the field of view with the road
    /// removed, and its voxelization on `grid`.
    pub fn supervise(&self, lidar: &PointCloud, grid: &PolarGrid) -> Result<(PointCloud, OccupancyGrid)> {
        lidar.check()?;
        let cropped = crop_fov(lidar, &self.grid, self.grid.max_range());
        let cloud = remove_ground(&cropped, &self.ground).cloud;
        let occ = voxelize(&cloud, grid);
        Ok((cloud, occ))
    }

    /// All frames of a scene, processed and labeled. `label_grid` sets the
    /// elevation layout of the labels.
    pub fn labeled_frames(&self, scene: &Scene, label_grid: &PolarGrid) -> Result<Vec<LabeledFrame>> {
        (0..scene.n_frames())
            .into_par_iter()
            .map(|f| {
                let (adc, lidar) = self.simulate(scene, f)?;
                let cube = self.process(&adc)?;
                let (gt_cloud, gt) = self.supervise(&lidar, label_grid)?;
                Ok(LabeledFrame { cube, gt_cloud, gt })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub cube: RadarCube,
    pub gt_cloud: PointCloud,
    pub gt: OccupancyGrid,
}

/// First frame of every full window of `t` frames.
pub fn window_starts(n_frames: usize, t: usize) -> Result<Vec<usize>> {
    if t == 0 || n_frames < t {
        return Err(FormatError::Invalid(format!("{n_frames} frames cannot fill a window of {t}")));
    }
    Ok((0..=n_frames - t).collect())
}

/// The window used to predict frame `f`: the one ending at `f`, or the first
/// window for the leading frames. Returns (start, position in window).
pub fn covering_window(f: usize, n_frames: usize, t: usize) -> (usize, usize) {
    let start = f.saturating_sub(t - 1).min(n_frames - t);
    (start, f - start)
}

pub fn training_windows<F: Scalar>(frames: &[LabeledFrame], t: usize, ablations: &Ablations) -> Result<Vec<TrainingWindow<F>>> {
    window_starts(frames.len(), t)?
        .into_iter()
        .map(|s| {
            let win = &frames[s..s + t];
            let cubes: Vec<RadarCube> = win.iter().map(|f| f.cube.clone()).collect();
            let grids: Vec<OccupancyGrid> = win.iter().map(|f| f.gt.clone()).collect();
            Ok(TrainingWindow { input: build_input(&cubes, ablations)?, target: build_target(&grids)? })
        })
        .collect()
}

/// One occupancy grid per cube, each predicted by its covering window.
pub fn predict_sequence<F: Scalar>(
    model: &DetectorModel<F>,
    cubes: &[RadarCube],
    grid: &PolarGrid,
    threshold: f64,
) -> Result<Vec<OccupancyGrid>> {
    let t = model.config.frames;
    let starts = window_starts(cubes.len(), t)?;
    let per_window: Vec<Vec<OccupancyGrid>> = starts
        .par_iter()
        .map(|&s| {
            let input = build_input::<F>(&cubes[s..s + t], &model.config.ablations)?;
            Ok(predict_occupancy(model, &input, grid, threshold)?)
        })
        .collect::<Result<_>>()?;
    Ok((0..cubes.len())
        .map(|f| {
            let (s, k) = covering_window(f, cubes.len(), t);
            per_window[s][k].clone()
        })
        .collect())
}

/// Occupancy probabilities per cube (`[R, A, E]` layout), each from its
/// covering window.
pub fn predict_probabilities<F: Scalar>(model: &DetectorModel<F>, cubes: &[RadarCube]) -> Result<Vec<Vec<f64>>> {
    let t = model.config.frames;
    let starts = window_starts(cubes.len(), t)?;
    let per_window: Vec<Vec<Vec<f64>>> = starts
        .par_iter()
        .map(|&s| {
            let input = build_input::<F>(&cubes[s..s + t], &model.config.ablations)?;
            Ok(window_probabilities(model, &input)?)
        })
        .collect::<Result<_>>()?;
    Ok((0..cubes.len())
        .map(|f| {
            let (s, k) = covering_window(f, cubes.len(), t);
            per_window[s][k].clone()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_every_frame_once() {
        assert_eq!(window_starts(5, 3).unwrap(), vec![0, 1, 2]);
        assert!(window_starts(2, 3).is_err());
        let cover: Vec<_> = (0..5).map(|f| covering_window(f, 5, 3)).collect();
        assert_eq!(cover, vec![(0, 0), (0, 1), (0, 2), (1, 2), (2, 2)]);
        assert_eq!(covering_window(0, 1, 1), (0, 0));
    }
}
