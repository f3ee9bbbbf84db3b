//! Zero-filled 2D FFT beamforming over the sparse virtual array.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::array::ArrayGeometry;
use crate::error::{Error, Result};
use crate::grid::PolarGrid;
use crate::pipeline::range_doppler::{hamming, RangeDopplerMap};
use crate::types::RadarCube;

/// Per-cell beamformer with precomputed layout, windows and FFT plans.
pub struct Beamformer {
    az_fft: Arc<dyn Fft<f64>>,
    el_fft: Arc<dyn Fft<f64>>,
    n_az_fft: usize,
    n_el_fft: usize,
    /// (channel, folded az index, folded el index, weight)
    taps: Vec<(usize, usize, usize, f64)>,
    /// Folded elevation rows that receive data.
    rows: Vec<usize>,
    az_bins: Vec<usize>,
    el_bins: Vec<usize>,
}

impl Beamformer {
    /// With a single-bin elevation axis only the z = 0 row of the array is used.
    pub fn new(geom: &ArrayGeometry, grid: &PolarGrid) -> Result<Self> {
        let no_elevation = grid.n_el() == 1;
        let elems: Vec<(usize, i32, i32)> = geom
            .virtual_elements()
            .iter()
            .enumerate()
            .filter(|(_, v)| !no_elevation || v.pos.z == 0)
            .map(|(i, v)| (i, v.pos.x, v.pos.z))
            .collect();
        if elems.is_empty() {
            return Err(Error::Config("no virtual elements available for beamforming".into()));
        }
        let x0 = elems.iter().map(|e| e.1).min().unwrap();
        let x1 = elems.iter().map(|e| e.1).max().unwrap();
        let z0 = elems.iter().map(|e| e.2).min().unwrap();
        // Hamming across azimuth only: a taper over the sparse elevation rows
        // would give the dense z = 0 row an endpoint weight of 0.08.
        let wx = hamming((x1 - x0 + 1) as usize);
        // overlapped elements share their position's weight
        let mut multiplicity = std::collections::HashMap::new();
        for e in &elems {
            *multiplicity.entry((e.1, e.2)).or_insert(0usize) += 1;
        }
        let (n_az_fft, n_el_fft) = (grid.az.fft_size, grid.el.fft_size);
        let taps: Vec<(usize, usize, usize, f64)> = elems
            .iter()
            .map(|&(i, x, z)| {
                let (dx, dz) = ((x - x0) as usize, (z - z0) as usize);
                let w = wx[dx] / multiplicity[&(x, z)] as f64;
                // a DFT sampled at N points equals the DFT of the sequence folded mod N
                (i, dx % n_az_fft, dz % n_el_fft, w)
            })
            .collect();
        let mut rows: Vec<usize> = taps.iter().map(|t| t.2).collect();
        rows.sort_unstable();
        rows.dedup();
        let fold = |k: i64, n: usize| k.rem_euclid(n as i64) as usize;
        let az_bins = (0..grid.n_az()).map(|a| fold(grid.az.fft_index(a), n_az_fft)).collect();
        let el_bins = (0..grid.n_el()).map(|e| fold(grid.el.fft_index(e), n_el_fft)).collect();
        let mut planner = FftPlanner::<f64>::new();
        Ok(Self {
            az_fft: planner.plan_fft_forward(n_az_fft),
            el_fft: planner.plan_fft_forward(n_el_fft),
            n_az_fft,
            n_el_fft,
            taps,
            rows,
            az_bins,
            el_bins,
        })
    }

    /// Writes, for every azimuth bin, the max power over elevation and the
    /// elevation bin attaining it (lowest index on ties).
    pub fn beamform(&self, x: &[Complex64], power: &mut [f64], elev: &mut [u16], scratch: &mut Scratch) {
        let (naz, nel) = (self.n_az_fft, self.n_el_fft);
        let plane = &mut scratch.plane;
        plane.clear();
        plane.resize(naz * nel, Complex64::new(0.0, 0.0));
        for &(ch, ax, ez, w) in &self.taps {
            plane[ez * naz + ax] += x[ch] * w;
        }
        for &row in &self.rows {
            self.az_fft.process(&mut plane[row * naz..(row + 1) * naz]);
        }
        let col = &mut scratch.column;
        col.resize(nel, Complex64::new(0.0, 0.0));
        for (a, &ka) in self.az_bins.iter().enumerate() {
            for (z, c) in col.iter_mut().enumerate() {
                *c = plane[z * naz + ka];
            }
            if nel > 1 {
                self.el_fft.process(col);
            }
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0u16;
            for (e, &ke) in self.el_bins.iter().enumerate() {
                let p = col[ke].norm_sqr();
                if p > best {
                    best = p;
                    arg = e as u16;
                }
            }
            power[a] = best;
            elev[a] = arg;
        }
    }
}

#[derive(Default)]
pub struct Scratch {
    plane: Vec<Complex64>,
    column: Vec<Complex64>,
}

pub(crate) fn check_shapes(rd: &RangeDopplerMap, geom: &ArrayGeometry, grid: &PolarGrid) -> Result<()> {
    if rd.n_range < grid.n_range || rd.n_doppler != grid.n_doppler || rd.n_vchan != geom.n_virtual() {
        return Err(Error::Shape(format!(
            "map {}x{}x{} incompatible with grid {}x{} / {} channels",
            rd.n_range,
            rd.n_doppler,
            rd.n_vchan,
            grid.n_range,
            grid.n_doppler,
            geom.n_virtual()
        )));
    }
    Ok(())
}

/// Beamforms every (range, Doppler) cell of `rd` inside the grid.
pub fn doa_estimate(
    rd: &RangeDopplerMap,
    geom: &ArrayGeometry,
    grid: &PolarGrid,
    timestamp: f64,
) -> Result<RadarCube> {
    check_shapes(rd, geom, grid)?;
    let bf = Beamformer::new(geom, grid)?;
    let na = grid.n_az();
    let mut power = vec![0.0; grid.cube_len()];
    let mut elev = vec![0u16; grid.cube_len()];
    let mut scratch = Scratch::default();
    for r in 0..grid.n_range {
        for d in 0..grid.n_doppler {
            let o = (r * grid.n_doppler + d) * na;
            bf.beamform(rd.cell(r, d), &mut power[o..o + na], &mut elev[o..o + na], &mut scratch);
        }
    }
    RadarCube::new(grid.clone(), power, elev, timestamp)
}
