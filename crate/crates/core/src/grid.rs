//! The non-uniform spherical grid shared by radar cubes and occupancy grids.
//!
//! Angles are sampled uniformly in direction sine (the natural output of an
//! FFT across a half-wavelength array), so cells are narrow at boresight and
//! wide toward the edge of the field of view. Coordinates: x right, y
//! boresight, z up. The azimuth sine is the x direction cosine and the
//! elevation sine is the z direction cosine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::WaveformConfig;

/// One angular axis: `n_bins` FFT bins of an `fft_size`-point transform,
/// centered on zero. Bin `i` has sine `2 (i - n_bins/2) / fft_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineAxis {
    pub n_bins: usize,
    pub fft_size: usize,
    pub fov_deg: f64,
}

impl SineAxis {
    pub fn new(n_bins: usize, fft_size: usize, fov_deg: f64) -> Result<Self> {
        let axis = Self { n_bins, fft_size, fov_deg };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        if self.n_bins == 0 || self.n_bins > self.fft_size {
            return Err(Error::Config(format!(
                "angular axis needs 1..={} bins, got {}",
                self.fft_size, self.n_bins
            )));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 90.0) {
            return Err(Error::Config(format!("fov {} deg outside (0, 90]", self.fov_deg)));
        }
        if self.n_bins > 1 {
            // every center must lie inside the FoV up to half a bin
            let limit = self.fov_deg.to_radians().sin() + 1.0 / self.fft_size as f64;
            if self.max_abs_sine() > limit + 1e-12 {
                return Err(Error::Config(format!(
                    "{} bins of a {}-point transform exceed the +/-{} deg FoV",
                    self.n_bins, self.fft_size, self.fov_deg
                )));
            }
        }
        Ok(())
    }

    /// Signed FFT frequency index of bin `i`.
    pub fn fft_index(&self, i: usize) -> i64 {
        i as i64 - (self.n_bins / 2) as i64
    }

    pub fn center(&self, i: usize) -> f64 {
        2.0 * self.fft_index(i) as f64 / self.fft_size as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.center(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.fft_size as f64
    }

    pub fn max_abs_sine(&self) -> f64 {
        self.center(0).abs().max(self.center(self.n_bins - 1).abs())
    }

    /// Bin whose cell contains sine `s`.
    pub fn bin_of(&self, s: f64) -> Option<usize> {
        if !s.is_finite() {
            return None;
        }
        let k = (s * self.fft_size as f64 / 2.0).round() as i64;
        let i = k + (self.n_bins / 2) as i64;
        (0..self.n_bins as i64).contains(&i).then_some(i as usize)
    }
}

/// Sizes of the polar grid. Doppler bins always equal `n_chirps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_range: usize,
    pub range_fft: usize,
    pub az_bins: usize,
    pub az_fft: usize,
    pub az_fov_deg: f64,
    pub el_bins: usize,
    pub el_fft: usize,
    pub el_fov_deg: f64,
}

impl GridConfig {
    /// 128 range x 64 azimuth (+/-70 deg) x 16 elevation (+/-20 deg).
    pub fn desk_scale() -> Self {
        Self {
            n_range: 128,
            range_fft: 256,
            az_bins: 64,
            az_fft: 70,
            az_fov_deg: 70.0,
            el_bins: 16,
            el_fft: 48,
            el_fov_deg: 20.0,
        }
    }

    /// 500 range x 240 azimuth x 44 elevation.
    pub fn full_scale() -> Self {
        Self {
            n_range: 500,
            range_fft: 512,
            az_bins: 240,
            az_fft: 256,
            az_fov_deg: 70.0,
            el_bins: 44,
            el_fft: 128,
            el_fov_deg: 20.0,
        }
    }
}

/// Range / Doppler / azimuth-sine / elevation-sine bin layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    /// Spacing between range bin centers (m); bin `i` is centered at `i * range_res`.
    pub range_res: f64,
    pub n_range: usize,
    /// Radial velocity per Doppler bin (m/s); positive = receding.
    pub doppler_res: f64,
    pub n_doppler: usize,
    pub az: SineAxis,
    pub el: SineAxis,
}

/// (range, azimuth, elevation) bin indices of one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub r: usize,
    pub a: usize,
    pub e: usize,
}

impl PolarGrid {
    pub fn new(
        range_res: f64,
        n_range: usize,
        doppler_res: f64,
        n_doppler: usize,
        az: SineAxis,
        el: SineAxis,
    ) -> Result<Self> {
        if !(range_res > 0.0 && range_res.is_finite()) || n_range == 0 {
            return Err(Error::Config("range axis must be non-empty with positive spacing".into()));
        }
        if !(doppler_res > 0.0 && doppler_res.is_finite()) || n_doppler == 0 {
            return Err(Error::Config("Doppler axis must be non-empty with positive spacing".into()));
        }
        az.validate()?;
        el.validate()?;
        Ok(Self { range_res, n_range, doppler_res, n_doppler, az, el })
    }

    pub fn from_config(wf: &WaveformConfig, cfg: &GridConfig) -> Result<Self> {
        let d = wf.derived()?;
        if cfg.range_fft < wf.n_adc {
            return Err(Error::Config(format!(
                "range_fft {} smaller than n_adc {}",
                cfg.range_fft, wf.n_adc
            )));
        }
        if cfg.n_range > cfg.range_fft {
            return Err(Error::Config(format!(
                "n_range {} exceeds range_fft {}",
                cfg.n_range, cfg.range_fft
            )));
        }
        Self::new(
            d.r_max / cfg.range_fft as f64,
            cfg.n_range,
            2.0 * d.v_max / wf.n_chirps as f64,
            wf.n_chirps,
            SineAxis::new(cfg.az_bins, cfg.az_fft, cfg.az_fov_deg)?,
            SineAxis::new(cfg.el_bins, cfg.el_fft, cfg.el_fov_deg)?,
        )
    }

    /// The same grid with elevation collapsed to one bin.
    pub fn without_elevation(&self) -> Self {
        Self { el: SineAxis { n_bins: 1, fft_size: 1, fov_deg: self.el.fov_deg }, ..self.clone() }
    }

    pub fn n_az(&self) -> usize {
        self.az.n_bins
    }

    pub fn n_el(&self) -> usize {
        self.el.n_bins
    }

    pub fn range_center(&self, i: usize) -> f64 {
        i as f64 * self.range_res
    }

    /// `n_range + 1` cell boundaries; the first cell starts at zero.
    pub fn range_edges(&self) -> Vec<f64> {
        (0..=self.n_range)
            .map(|i| if i == 0 { 0.0 } else { (i as f64 - 0.5) * self.range_res })
            .collect()
    }

    /// Largest range covered by the grid.
    pub fn max_range(&self) -> f64 {
        (self.n_range as f64 - 0.5) * self.range_res
    }

    pub fn doppler_center(&self, d: usize) -> f64 {
        (d as f64 - (self.n_doppler / 2) as f64) * self.doppler_res
    }

    pub fn doppler_centers(&self) -> Vec<f64> {
        (0..self.n_doppler).map(|d| self.doppler_center(d)).collect()
    }

    pub fn az_sin_centers(&self) -> Vec<f64> {
        self.az.centers()
    }

    pub fn el_sin_centers(&self) -> Vec<f64> {
        self.el.centers()
    }

    /// Cartesian center of a voxel.
    pub fn voxel_center(&self, v: VoxelIndex) -> [f64; 3] {
        let r = self.range_center(v.r);
        let u = self.az.center(v.a);
        let w = if self.el.n_bins == 1 { 0.0 } else { self.el.center(v.e) };
        let fwd = (1.0 - u * u - w * w).max(0.0).sqrt();
        [r * u, r * fwd, r * w]
    }

    /// Voxel containing `p`, or `None` when the point lies outside the grid.
    pub fn voxel_index_of(&self, p: [f64; 3]) -> Option<VoxelIndex> {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if !r.is_finite() || p[1] < 0.0 {
            return None;
        }
        let ri = (r / self.range_res).round();
        if ri >= self.n_range as f64 {
            return None;
        }
        let (u, w) = if r > 0.0 { (p[0] / r, p[2] / r) } else { (0.0, 0.0) };
        let a = self.az.bin_of(u)?;
        let e = self.el.bin_of(w)?;
        Some(VoxelIndex { r: ri as usize, a, e })
    }

    /// Flat index into an `R x A x E` occupancy tensor.
    pub fn occupancy_offset(&self, v: VoxelIndex) -> usize {
        (v.r * self.n_az() + v.a) * self.n_el() + v.e
    }

    pub fn occupancy_len(&self) -> usize {
        self.n_range * self.n_az() * self.n_el()
    }

    pub fn cube_len(&self) -> usize {
        self.n_range * self.n_doppler * self.n_az()
    }

    /// Same bin layout (tolerant of float noise in spacings).
    pub fn same_layout(&self, other: &PolarGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        self.n_range == other.n_range
            && self.n_doppler == other.n_doppler
            && self.az == other.az
            && self.el == other.el
            && close(self.range_res, other.range_res)
            && close(self.doppler_res, other.doppler_res)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk() -> PolarGrid {
        PolarGrid::from_config(&WaveformConfig::desk_scale(), &GridConfig::desk_scale()).unwrap()
    }

    #[test]
    fn full_scale_bin_counts_fit_fov() {
        let g = PolarGrid::from_config(&WaveformConfig::full_scale(), &GridConfig::full_scale())
            .unwrap();
        assert_eq!((g.n_range, g.n_doppler, g.n_az(), g.n_el()), (500, 128, 240, 44));
        for grid in [&g, &desk()] {
            for s in grid.az_sin_centers() {
                assert!(s.asin().to_degrees().abs() <= 70.0);
            }
        }
        // 0.9397 * 256 ~ 240 and 0.342 * 128 ~ 44
        let crop = |fft: usize, deg: f64| {
            let lim = deg.to_radians().sin();
            (-(fft as i64) / 2..(fft as i64) / 2)
                .filter(|k| (2.0 * *k as f64 / fft as f64).abs() <= lim + 1.0 / fft as f64)
                .count()
        };
        assert!(crop(256, 70.0).abs_diff(240) <= 1);
        assert!(crop(128, 20.0).abs_diff(44) <= 1);
    }

    #[test]
    fn centers_are_uniform_in_sine() {
        let g = desk();
        for c in [g.az_sin_centers(), g.el_sin_centers(), g.doppler_centers()] {
            let d: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(d.iter().all(|&x| x > 0.0));
            let (lo, hi) = d.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
            assert!(hi - lo < 1e-12);
        }
    }

    #[test]
    fn cells_widen_toward_fov_edge() {
        let g = desk();
        let angles: Vec<f64> = g.az_sin_centers().iter().map(|s| s.asin()).collect();
        let mid = g.n_az() / 2;
        let center_width = angles[mid + 1] - angles[mid];
        let edge_width = angles[g.n_az() - 1] - angles[g.n_az() - 2];
        assert!(edge_width > 2.0 * center_width);
    }

    #[test]
    fn boresight_voxel_center() {
        let g = desk();
        let r = (10.0 / g.range_res).round() as usize;
        let v = VoxelIndex { r, a: g.n_az() / 2, e: g.n_el() / 2 };
        let p = g.voxel_center(v);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[2], 0.0);
        assert!((p[1] - r as f64 * g.range_res).abs() < 1e-12);
        assert_eq!(g.voxel_index_of(p), Some(v));
    }

    #[test]
    fn out_of_fov() {
        let g = PolarGrid::from_config(&WaveformConfig::full_scale(), &GridConfig::full_scale())
            .unwrap();
        assert_eq!(g.voxel_index_of([0.0, 60.0, 0.0]), None);
        assert_eq!(g.voxel_index_of([10.0, -1.0, 0.0]), None);
        assert_eq!(g.voxel_index_of([10.0, 0.5, 0.0]), None);
        assert_eq!(g.voxel_index_of([f64::NAN, 1.0, 0.0]), None);
    }

    #[test]
    fn exhaustive_round_trip() {
        let wf = WaveformConfig::desk_scale();
        let cfg = GridConfig { n_range: 24, ..GridConfig::desk_scale() };
        let g = PolarGrid::from_config(&wf, &cfg).unwrap();
        for r in 1..g.n_range {
            for a in 0..g.n_az() {
                for e in 0..g.n_el() {
                    let v = VoxelIndex { r, a, e };
                    assert_eq!(g.voxel_index_of(g.voxel_center(v)), Some(v), "{v:?}");
                }
            }
        }
    }

    #[test]
    fn no_elevation_grid_maps_everything_to_row_zero() {
        let g = desk().without_elevation();
        let v = g.voxel_index_of([1.0, 10.0, 3.0]).unwrap();
        assert_eq!(v.e, 0);
        assert_eq!(g.voxel_center(v)[2], 0.0);
    }

    #[test]
    fn invalid_axes_rejected() {
        assert!(SineAxis::new(0, 16, 20.0).is_err());
        assert!(SineAxis::new(64, 64, 70.0).is_err());
        assert!(SineAxis::new(64, 70, 70.0).is_ok());
    }

    proptest! {
        #[test]
        fn voxel_lookup_is_consistent_with_center(r in 1usize..128, a in 0usize..64, e in 0usize..16) {
            let g = desk();
            let v = VoxelIndex { r, a, e };
            prop_assert_eq!(g.voxel_index_of(g.voxel_center(v)), Some(v));
        }
    }
}
