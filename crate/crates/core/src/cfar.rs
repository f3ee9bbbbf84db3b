//! Cell-averaging and ordered-statistic CFAR kernels over N-dimensional power
//! tensors, and the range-azimuth / Doppler OS-CFAR cascade.
//!
//! Edge policy: axes marked periodic (Doppler) wrap around; other axes
//! truncate the window and the threshold factor is recomputed for the
//! reduced number of training cells.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{OccupancyGrid, RadarCube};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfarKind {
    #[serde(rename = "ca")]
    CellAveraging,
    #[serde(rename = "os")]
    OrderedStatistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    pub kind: CfarKind,
    /// Tensor axes spanned by the sliding window.
    pub dims: Vec<usize>,
    /// Training cells per side along each window axis.
    pub n_train: usize,
    /// Guard cells per side along each window axis.
    pub n_guard: usize,
    /// OS only: rank k = round(rank_fraction * N).
    pub rank_fraction: f64,
    pub target_pfa: f64,
}

impl CfarConfig {
    pub fn ca(dims: Vec<usize>, n_train: usize, n_guard: usize, target_pfa: f64) -> Self {
        Self { kind: CfarKind::CellAveraging, dims, n_train, n_guard, rank_fraction: 0.75, target_pfa }
    }

    pub fn os(dims: Vec<usize>, n_train: usize, n_guard: usize, rank_fraction: f64, target_pfa: f64) -> Self {
        Self { kind: CfarKind::OrderedStatistic, dims, n_train, n_guard, rank_fraction, target_pfa }
    }

    /// Range-azimuth stage of the cascade: rank 0.75 N, no guard cells.
    pub fn cascade_range_azimuth() -> Self {
        Self::os(vec![0, 2], 16, 0, 0.75, 1e-4)
    }

    /// Doppler stage of the cascade; 8 cells per side so the window fits a
    /// 32-bin Doppler axis.
    pub fn cascade_doppler() -> Self {
        Self::os(vec![1], 8, 0, 0.75, 1e-4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train < 1 {
            return Err(Error::Config("CFAR needs at least one training cell per side".into()));
        }
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return Err(Error::Config(format!("target_pfa {} outside (0, 1)", self.target_pfa)));
        }
        if self.kind == CfarKind::OrderedStatistic && !(self.rank_fraction > 0.0 && self.rank_fraction <= 1.0) {
            return Err(Error::Config(format!("rank_fraction {} outside (0, 1]", self.rank_fraction)));
        }
        if self.dims.is_empty() {
            return Err(Error::Config("CFAR window needs at least one axis".into()));
        }
        Ok(())
    }
}

/// CA-CFAR scale factor for `n` training cells: `n (pfa^(-1/n) - 1)`.
pub fn ca_alpha(n: usize, pfa: f64) -> f64 {
    let n = n as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

/// False-alarm probability of OS-CFAR with rank `k` of `n` and scale `alpha`
/// under exponential noise.
pub fn os_pfa(n: usize, k: usize, alpha: f64) -> f64 {
    (0..k).map(|i| (n - i) as f64 / ((n - i) as f64 + alpha)).product()
}

/// Solves `os_pfa(n, k, alpha) = pfa` for alpha by bisection.
pub fn os_alpha(n: usize, k: usize, pfa: f64) -> f64 {
    assert!(k >= 1 && k <= n, "rank {k} outside 1..={n}");
    let log_target = pfa.ln();
    let f = |a: f64| -> f64 {
        (0..k).map(|i| ((n - i) as f64 / ((n - i) as f64 + a)).ln()).sum::<f64>() - log_target
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Borrowed N-d power tensor; `periodic[i]` marks wrapping axes.
#[derive(Debug, Clone, Copy)]
pub struct PowerView<'a> {
    pub data: &'a [f64],
    pub shape: &'a [usize],
    pub periodic: &'a [bool],
}

impl<'a> PowerView<'a> {
    pub fn new(data: &'a [f64], shape: &'a [usize], periodic: &'a [bool]) -> Result<Self> {
        if shape.len() != periodic.len() || shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!("tensor of {} values cannot have shape {shape:?}", data.len())));
        }
        Ok(Self { data, shape, periodic })
    }
}

/// Threshold factors cached per training-cell count.
struct AlphaCache<'c> {
    cfg: &'c CfarConfig,
    cache: HashMap<usize, (usize, f64)>,
}

impl<'c> AlphaCache<'c> {
    fn new(cfg: &'c CfarConfig) -> Self {
        Self { cfg, cache: HashMap::new() }
    }

    /// (rank, alpha) for `n` training cells.
    fn get(&mut self, n: usize) -> (usize, f64) {
        let cfg = self.cfg;
        *self.cache.entry(n).or_insert_with(|| match cfg.kind {
            CfarKind::CellAveraging => (0, ca_alpha(n, cfg.target_pfa)),
            CfarKind::OrderedStatistic => {
                let k = ((cfg.rank_fraction * n as f64).round() as usize).clamp(1, n);
                (k, os_alpha(n, k, cfg.target_pfa))
            }
        })
    }
}

/// Sliding-window detector shared by both kernels.
fn cfar_detect(view: PowerView<'_>, cfg: &CfarConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    let rank = view.shape.len();
    for &ax in &cfg.dims {
        if ax >= rank {
            return Err(Error::Config(format!("window axis {ax} beyond tensor rank {rank}")));
        }
        let full = 2 * (cfg.n_guard + cfg.n_train) + 1;
        if full > view.shape[ax] {
            return Err(Error::Config(format!(
                "window of {full} cells larger than axis {ax} of length {}",
                view.shape[ax]
            )));
        }
    }
    let half = (cfg.n_guard + cfg.n_train) as i64;
    let guard = cfg.n_guard as i64;
    // training offsets: window box minus guard box (which contains the cell under test)
    let mut offsets: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in &cfg.dims {
        offsets = offsets
            .into_iter()
            .flat_map(|o| {
                (-half..=half).map(move |d| {
                    let mut o = o.clone();
                    o.push(d);
                    o
                })
            })
            .collect();
    }
    offsets.retain(|o| o.iter().any(|d| d.abs() > guard));

    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * view.shape[i + 1];
    }
    let mut alphas = AlphaCache::new(cfg);
    let mut out = vec![false; view.data.len()];
    let mut train = Vec::with_capacity(offsets.len());
    let mut coord = vec![0usize; rank];
    for (flat, hit) in out.iter_mut().enumerate() {
        let mut rem = flat;
        for i in 0..rank {
            coord[i] = rem / strides[i];
            rem %= strides[i];
        }
        train.clear();
        'offsets: for o in &offsets {
            let mut idx = flat as i64;
            for (&ax, &d) in cfg.dims.iter().zip(o) {
                let len = view.shape[ax] as i64;
                let mut c = coord[ax] as i64 + d;
                if view.periodic[ax] {
                    c = c.rem_euclid(len);
                } else if c < 0 || c >= len {
                    continue 'offsets;
                }
                idx += (c - coord[ax] as i64) * strides[ax] as i64;
            }
            train.push(view.data[idx as usize]);
        }
        let n = train.len();
        let (k, alpha) = alphas.get(n);
        let statistic = match cfg.kind {
            CfarKind::CellAveraging => train.iter().sum::<f64>() / n as f64,
            CfarKind::OrderedStatistic => {
                let (_, kth, _) = train.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
                *kth
            }
        };
        *hit = view.data[flat] > alpha * statistic;
    }
    Ok(out)
}

/// Cell-averaging CFAR: detect where `power > alpha * mean(training cells)`.
pub fn ca_cfar(view: PowerView<'_>, cfg: &CfarConfig) -> Result<Vec<bool>> {
    if cfg.kind != CfarKind::CellAveraging {
        return Err(Error::Config("ca_cfar needs a cell-averaging config".into()));
    }
    cfar_detect(view, cfg)
}

/// Ordered-statistic CFAR: detect where `power > alpha_os * (k-th smallest training cell)`.
pub fn os_cfar(view: PowerView<'_>, cfg: &CfarConfig) -> Result<Vec<bool>> {
    if cfg.kind != CfarKind::OrderedStatistic {
        return Err(Error::Config("os_cfar needs an ordered-statistic config".into()));
    }
    cfar_detect(view, cfg)
}

/// Runs whichever kernel `cfg.kind` selects.
pub fn cfar(view: PowerView<'_>, cfg: &CfarConfig) -> Result<Vec<bool>> {
    cfar_detect(view, cfg)
}

/// 2D CFAR over (range, azimuth) in every Doppler slice AND 1D CFAR along
/// Doppler; surviving cells land at their best elevation (or elevation 0 when
/// `no_elevation`), OR-ed across Doppler.
pub fn cascade_detect(
    cube: &RadarCube,
    cfg_range_azimuth: &CfarConfig,
    cfg_doppler: &CfarConfig,
    no_elevation: bool,
) -> Result<OccupancyGrid> {
    cube.check()?;
    let shape = cube.shape();
    let periodic = [false, true, false];
    let view = PowerView::new(&cube.power, &shape, &periodic)?;
    let stage1 = cfar(view, cfg_range_azimuth)?;
    let stage2 = cfar(view, cfg_doppler)?;
    let grid = if no_elevation { cube.grid.without_elevation() } else { cube.grid.clone() };
    let mut occ = OccupancyGrid::empty(grid);
    let (nd, na) = (shape[1], shape[2]);
    for (i, (a, b)) in stage1.iter().zip(&stage2).enumerate() {
        if *a && *b {
            let r = i / (nd * na);
            let az = i % na;
            let e = if no_elevation { 0 } else { cube.elev_argmax[i] as usize };
            occ.set(crate::grid::VoxelIndex { r, a: az, e });
        }
    }
    Ok(occ)
}
