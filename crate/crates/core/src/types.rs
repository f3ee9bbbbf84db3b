//! Data products flowing through the pipeline: raw ADC frames, radar cubes,
//! occupancy grids and point clouds.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{PolarGrid, VoxelIndex};

/// Complex baseband samples of one coherent processing interval,
/// laid out `[n_fast x n_slow x n_vchan]` row-major. Slow time is per-Tx
/// (already de-interleaved).
#[derive(Debug, Clone, PartialEq)]
pub struct AdcFrame {
    pub n_fast: usize,
    pub n_slow: usize,
    pub n_vchan: usize,
    pub data: Vec<Complex64>,
    pub timestamp: f64,
    /// Transmitter of each raw (interleaved) chirp.
    pub tx_of_chirp: Vec<usize>,
}

impl AdcFrame {
    pub fn zeros(n_fast: usize, n_slow: usize, n_vchan: usize, n_tx: usize, timestamp: f64) -> Self {
        Self {
            n_fast,
            n_slow,
            n_vchan,
            data: vec![Complex64::new(0.0, 0.0); n_fast * n_slow * n_vchan],
            timestamp,
            tx_of_chirp: (0..n_slow * n_tx).map(|c| c % n_tx).collect(),
        }
    }

    #[inline]
    pub fn index(&self, fast: usize, slow: usize, chan: usize) -> usize {
        (fast * self.n_slow + slow) * self.n_vchan + chan
    }

    pub fn at(&self, fast: usize, slow: usize, chan: usize) -> Complex64 {
        self.data[self.index(fast, slow, chan)]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_fast, self.n_slow, self.n_vchan]
    }

    pub fn check(&self) -> Result<()> {
        if self.data.len() != self.n_fast * self.n_slow * self.n_vchan {
            return Err(Error::Shape(format!(
                "ADC payload has {} samples, shape {:?}",
                self.data.len(),
                self.shape()
            )));
        }
        Ok(())
    }
}

/// Power and best-elevation index per (range, Doppler, azimuth) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub grid: PolarGrid,
    /// Linear power, `[R x D x A]`.
    pub power: Vec<f64>,
    /// Elevation bin holding the maximum power, `[R x D x A]`.
    pub elev_argmax: Vec<u16>,
    pub timestamp: f64,
}

impl RadarCube {
    pub fn new(grid: PolarGrid, power: Vec<f64>, elev_argmax: Vec<u16>, timestamp: f64) -> Result<Self> {
        let cube = Self { grid, power, elev_argmax, timestamp };
        cube.check()?;
        Ok(cube)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.grid.cube_len();
        if self.power.len() != n || self.elev_argmax.len() != n {
            return Err(Error::Shape(format!(
                "cube tensors have {}/{} cells, grid needs {n}",
                self.power.len(),
                self.elev_argmax.len()
            )));
        }
        let n_el = self.grid.n_el();
        if self.elev_argmax.iter().any(|&e| e as usize >= n_el) {
            return Err(Error::Shape("elevation index beyond grid".into()));
        }
        if self.power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Shape("cube power must be non-negative".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.grid.n_range, self.grid.n_doppler, self.grid.n_az()]
    }

    #[inline]
    pub fn index(&self, r: usize, d: usize, a: usize) -> usize {
        (r * self.grid.n_doppler + d) * self.grid.n_az() + a
    }

    /// Doppler bin with the largest power at (r, a); lowest index on ties.
    pub fn peak_doppler(&self, r: usize, a: usize) -> usize {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for d in 0..self.grid.n_doppler {
            let p = self.power[self.index(r, d, a)];
            if p > best_p {
                best_p = p;
                best = d;
            }
        }
        best
    }
}

/// Binary `[R x A x E]` detection cube.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub grid: PolarGrid,
    pub occ: Vec<u8>,
}

impl OccupancyGrid {
    pub fn empty(grid: PolarGrid) -> Self {
        let n = grid.occupancy_len();
        Self { grid, occ: vec![0; n] }
    }

    pub fn from_vec(grid: PolarGrid, occ: Vec<u8>) -> Result<Self> {
        if occ.len() != grid.occupancy_len() {
            return Err(Error::Shape(format!(
                "occupancy has {} cells, grid needs {}",
                occ.len(),
                grid.occupancy_len()
            )));
        }
        if occ.iter().any(|&v| v > 1) {
            return Err(Error::Shape("occupancy values must be 0 or 1".into()));
        }
        Ok(Self { grid, occ })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.grid.n_range, self.grid.n_az(), self.grid.n_el()]
    }

    pub fn get(&self, v: VoxelIndex) -> bool {
        self.occ[self.grid.occupancy_offset(v)] != 0
    }

    pub fn set(&mut self, v: VoxelIndex) {
        let i = self.grid.occupancy_offset(v);
        self.occ[i] = 1;
    }

    pub fn count(&self) -> usize {
        self.occ.iter().filter(|&&v| v != 0).count()
    }

    pub fn occupied(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        let (na, ne) = (self.grid.n_az(), self.grid.n_el());
        self.occ.iter().enumerate().filter(|(_, &v)| v != 0).map(move |(i, _)| VoxelIndex {
            r: i / (na * ne),
            a: (i / ne) % na,
            e: i % ne,
        })
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.occ.len().max(1) as f64
    }
}

/// Cartesian points with optional Doppler (m/s) and power (dB) features.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub doppler: Option<Vec<f64>>,
    pub power_db: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        Self { points, doppler: None, power_db: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Values per point: 3, 4 or 5.
    pub fn feature_count(&self) -> usize {
        3 + self.doppler.is_some() as usize + self.power_db.is_some() as usize
    }

    pub fn check(&self) -> Result<()> {
        let n = self.points.len();
        for f in [&self.doppler, &self.power_db].into_iter().flatten() {
            if f.len() != n {
                return Err(Error::Shape(format!("feature column has {} rows, cloud {n}", f.len())));
            }
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Shape("point coordinates must be finite".into()));
        }
        Ok(())
    }

    /// Keeps the points (and their features) for which `keep` is true.
    pub fn filter(&self, mut keep: impl FnMut(usize, &[f64; 3]) -> bool) -> PointCloud {
        let mask: Vec<bool> = self.points.iter().enumerate().map(|(i, p)| keep(i, p)).collect();
        let pick = |col: &Vec<f64>| -> Vec<f64> {
            col.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| *v).collect()
        };
        PointCloud {
            points: self.points.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect(),
            doppler: self.doppler.as_ref().map(pick),
            power_db: self.power_db.as_ref().map(pick),
        }
    }

    pub fn translated(&self, t: [f64; 3]) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]]).collect(),
            ..self.clone()
        }
    }
}

/// One point per occupied voxel at the voxel center. With a cube, each point
/// also carries the Doppler velocity and power (dB) of the strongest Doppler
/// bin at its (range, azimuth) cell.
pub fn grid_to_point_cloud(occ: &OccupancyGrid, cube: Option<&RadarCube>) -> Result<PointCloud> {
    if let Some(c) = cube {
        if c.grid.n_range != occ.grid.n_range || c.grid.n_az() != occ.grid.n_az() {
            return Err(Error::Shape("cube and occupancy grid disagree on range/azimuth".into()));
        }
    }
    let mut cloud = PointCloud::default();
    let mut doppler = Vec::new();
    let mut power = Vec::new();
    for v in occ.occupied() {
        cloud.points.push(occ.grid.voxel_center(v));
        if let Some(c) = cube {
            let d = c.peak_doppler(v.r, v.a);
            doppler.push(c.grid.doppler_center(d));
            power.push(10.0 * c.power[c.index(v.r, d, v.a)].max(f64::MIN_POSITIVE).log10());
        }
    }
    if cube.is_some() {
        cloud.doppler = Some(doppler);
        cloud.power_db = Some(power);
    }
    Ok(cloud)
}
