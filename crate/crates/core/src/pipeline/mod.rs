//! Raw ADC frame to radar cube: range/Doppler FFTs, TDMA velocity unfolding
//! and phase compensation, FFT beamforming and field-of-view crop.

pub mod doa;
pub mod range_doppler;
pub mod tdma;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::ArrayGeometry;
use crate::error::Result;
use crate::grid::PolarGrid;
use crate::types::{AdcFrame, RadarCube};
use crate::waveform::WaveformConfig;

pub use doa::{doa_estimate, Beamformer};
pub use range_doppler::{hamming, range_doppler_map, RangeDopplerMap};
pub use tdma::{
    compensate_cell, compensate_tdma_phase, doppler_bin_velocity, estimate_unfolded_velocity, UnfoldParams,
    UnfoldedVelocity,
};

/// How the TDMA phase migration is handled before beamforming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TdmaMode {
    /// No compensation.
    Off,
    /// Compensate with the aliased Doppler-bin velocity.
    DopplerBin,
    /// Unfold gated cells from overlapped pairs, then compensate.
    #[default]
    Unfolded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingConfig {
    /// Cells whose channel-summed power is below mean + `gate_db` skip unfolding.
    pub gate_db: f64,
    pub max_fold: i32,
    pub min_coherence: f64,
    pub tdma: TdmaMode,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        let u = UnfoldParams::default();
        Self { gate_db: 6.0, max_fold: u.max_fold, min_coherence: u.min_coherence, tdma: TdmaMode::Unfolded }
    }
}

impl ProcessingConfig {
    fn unfold_params(&self) -> UnfoldParams {
        UnfoldParams { max_fold: self.max_fold, min_coherence: self.min_coherence }
    }
}

/// A radar cube plus the velocity used to compensate every (range, Doppler) cell.
#[derive(Debug, Clone)]
pub struct ProcessedFrame {
    pub cube: RadarCube,
    /// `[R x D]` velocity (m/s) applied in compensation.
    pub velocity: Vec<f64>,
    /// `[R x D]` fold index chosen (0 for gated or ambiguous cells).
    pub fold: Vec<i32>,
}

/// Full per-frame processing chain, keeping per-cell velocity estimates.
pub fn process_frame_detailed(
    frame: &AdcFrame,
    cfg: &WaveformConfig,
    geom: &ArrayGeometry,
    grid: &PolarGrid,
    params: &ProcessingConfig,
) -> Result<ProcessedFrame> {
    geom.check_tx_count(cfg.n_tx, cfg.n_rx)?;
    // the grid's range spacing is r_max / range_fft
    let range_fft = (cfg.derived()?.r_max / grid.range_res).round() as usize;
    let rd = range_doppler_map(frame, cfg, range_fft.max(cfg.n_adc))?;
    doa::check_shapes(&rd, geom, grid)?;
    let (nr, nd, na) = (grid.n_range, grid.n_doppler, grid.n_az());

    let cell_power: Vec<f64> =
        (0..nr * nd).map(|i| rd.cell_power(i / nd, i % nd)).collect();
    let mean = cell_power.iter().sum::<f64>() / cell_power.len() as f64;
    let gate = mean * 10f64.powf(params.gate_db / 10.0);
    let can_unfold = !geom.overlapped_pairs().is_empty();
    let bin_velocity: Vec<f64> =
        (0..nd).map(|d| doppler_bin_velocity(cfg, nd, d)).collect::<Result<_>>()?;
    let unfold = params.unfold_params();
    let bf = Beamformer::new(geom, grid)?;

    let mut power = vec![0.0; nr * nd * na];
    let mut elev = vec![0u16; nr * nd * na];
    let mut velocity = vec![0.0; nr * nd];
    let mut fold = vec![0i32; nr * nd];
    power
        .par_chunks_mut(nd * na)
        .zip(elev.par_chunks_mut(nd * na))
        .zip(velocity.par_chunks_mut(nd).zip(fold.par_chunks_mut(nd)))
        .enumerate()
        .for_each(|(r, ((p_row, e_row), (v_row, f_row)))| {
            let mut scratch = doa::Scratch::default();
            let mut x = vec![Default::default(); rd.n_vchan];
            for d in 0..nd {
                x.copy_from_slice(rd.cell(r, d));
                let mut v = bin_velocity[d];
                let mut m = 0;
                if params.tdma == TdmaMode::Unfolded && can_unfold && cell_power[r * nd + d] >= gate {
                    // ambiguous cells keep fold 0
                    if let Ok(u) = estimate_unfolded_velocity(&rd, cfg, geom, (r, d), unfold) {
                        v = u.v_unfolded;
                        m = u.fold_index;
                    }
                }
                if params.tdma != TdmaMode::Off {
                    compensate_cell(&mut x, v, cfg, geom);
                }
                v_row[d] = v;
                f_row[d] = m;
                bf.beamform(&x, &mut p_row[d * na..(d + 1) * na], &mut e_row[d * na..(d + 1) * na], &mut scratch);
            }
        });
    let cube = RadarCube::new(grid.clone(), power, elev, frame.timestamp)?;
    Ok(ProcessedFrame { cube, velocity, fold })
}

/// ADC frame to radar cube.
pub fn process_frame(
    frame: &AdcFrame,
    cfg: &WaveformConfig,
    geom: &ArrayGeometry,
    grid: &PolarGrid,
    params: &ProcessingConfig,
) -> Result<RadarCube> {
    process_frame_detailed(frame, cfg, geom, grid, params).map(|p| p.cube)
}
