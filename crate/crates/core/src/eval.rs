//! Voxel-level detection rates, Chamfer distance and threshold sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PolarGrid, VoxelIndex};
use crate::types::{grid_to_point_cloud, OccupancyGrid, PointCloud};

/// Voxelwise confusion counts; `pd` is `None` when the ground truth is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRates {
    pub pd: Option<f64>,
    pub pfa: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn check_same_grid(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<()> {
    if !a.grid.same_layout(&b.grid) || a.occ.len() != b.occ.len() {
        return Err(Error::Shape(format!("grids {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn pd_pfa(pred: &OccupancyGrid, gt: &OccupancyGrid) -> Result<DetectionRates> {
    check_same_grid(pred, gt)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &g) in pred.occ.iter().zip(&gt.occ) {
        match (p != 0, g != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: u64, b: u64| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(DetectionRates { pd: ratio(tp, fn_), pfa: ratio(fp, tn), tp, fp, fn_, tn })
}

#[inline]
fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn brute_nearest(set: &[[f64; 3]], p: &[f64; 3]) -> f64 {
    set.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)
}

fn mean_nearest(from: &[[f64; 3]], nearest: impl FnMut(&[f64; 3]) -> f64) -> f64 {
    from.iter().map(nearest).sum::<f64>() / from.len() as f64
}

/// Mean nearest-neighbor distance from `a` to `b` plus from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(mean_nearest(&a.points, |p| brute_nearest(&b.points, p))
        + mean_nearest(&b.points, |p| brute_nearest(&a.points, p)))
}

/// Same value as [`chamfer`], using k-d trees for the nearest-neighbor queries.
pub fn chamfer_accel(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let (ta, tb) = (KdTree::build(&a.points), KdTree::build(&b.points));
    Ok(mean_nearest(&a.points, |p| tb.nearest_distance(p)) + mean_nearest(&b.points, |p| ta.nearest_distance(p)))
}

const LEAF: usize = 8;

/// Static 3-d tree over a point slice, stored as a permuted copy.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
}

impl KdTree {
    pub fn build(points: &[[f64; 3]]) -> Self {
        let mut points = points.to_vec();
        Self::split(&mut points, 0);
        Self { points }
    }

    fn split(pts: &mut [[f64; 3]], depth: usize) {
        if pts.len() <= LEAF {
            return;
        }
        let axis = depth % 3;
        let mid = pts.len() / 2;
        pts.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
        let (left, right) = pts.split_at_mut(mid);
        Self::split(left, depth + 1);
        Self::split(&mut right[1..], depth + 1);
    }

    pub fn nearest_distance(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        Self::search(&self.points, 0, q, &mut best);
        best
    }

    fn search(pts: &[[f64; 3]], depth: usize, q: &[f64; 3], best: &mut f64) {
        if pts.len() <= LEAF {
            for p in pts {
                *best = best.min(dist(p, q));
            }
            return;
        }
        let axis = depth % 3;
        let mid = pts.len() / 2;
        let pivot = &pts[mid];
        *best = best.min(dist(pivot, q));
        let delta = q[axis] - pivot[axis];
        let (near, far) =
            if delta < 0.0 { (&pts[..mid], &pts[mid + 1..]) } else { (&pts[mid + 1..], &pts[..mid]) };
        Self::search(near, depth + 1, q, best);
        if delta.abs() <= *best {
            Self::search(far, depth + 1, q, best);
        }
    }
}

/// Chamfer distance, or `None` when either cloud is empty.
pub fn chamfer_or_none(a: &PointCloud, b: &PointCloud) -> Option<f64> {
    chamfer_accel(a, b).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub pd: Option<f64>,
    pub pfa: Option<f64>,
    /// Between voxel-center clouds; `None` if either is empty.
    pub chamfer: Option<f64>,
}

/// Occupancy from probabilities: `p > t`, except that `t <= 0` marks every
/// voxel and `t >= 1` none.
pub fn threshold_probabilities(prob: &[f64], grid: &PolarGrid, t: f64) -> Result<OccupancyGrid> {
    let occ = prob
        .iter()
        .map(|&p| {
            let hit = if t <= 0.0 {
                true
            } else if t >= 1.0 {
                false
            } else {
                p > t
            };
            hit as u8
        })
        .collect();
    OccupancyGrid::from_vec(grid.clone(), occ)
}

pub fn roc_sweep(prob: &[f64], gt: &OccupancyGrid, thresholds: &[f64]) -> Result<Vec<RocPoint>> {
    if prob.len() != gt.occ.len() {
        return Err(Error::Shape(format!("{} probabilities for {} voxels", prob.len(), gt.occ.len())));
    }
    let gt_cloud = grid_to_point_cloud(gt, None)?;
    thresholds
        .iter()
        .map(|&t| {
            let pred = threshold_probabilities(prob, &gt.grid, t)?;
            let rates = pd_pfa(&pred, gt)?;
            let cloud = grid_to_point_cloud(&pred, None)?;
            Ok(RocPoint { threshold: t, pd: rates.pd, pfa: rates.pfa, chamfer: chamfer_or_none(&cloud, &gt_cloud) })
        })
        .collect()
}

/// Per-frame metrics as written to reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub pd: Option<f64>,
    pub pfa: Option<f64>,
    pub chamfer_m: Option<f64>,
}

/// Frame-uniform means; undefined per-frame values are skipped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub pd: Option<f64>,
    pub pfa: Option<f64>,
    pub chamfer_m: Option<f64>,
    pub frames: usize,
    pub undefined_pd: usize,
    pub undefined_chamfer: usize,
}

/// Metrics of a predicted grid against a ground-truth grid and point cloud.
pub fn frame_metrics(pred: &OccupancyGrid, gt: &OccupancyGrid, gt_cloud: &PointCloud) -> Result<FrameMetrics> {
    let rates = pd_pfa(pred, gt)?;
    let cloud = grid_to_point_cloud(pred, None)?;
    Ok(FrameMetrics { pd: rates.pd, pfa: rates.pfa, chamfer_m: chamfer_or_none(&cloud, gt_cloud) })
}

pub fn summarize(frames: &[FrameMetrics]) -> MetricsSummary {
    let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let pd: Vec<f64> = frames.iter().filter_map(|f| f.pd).collect();
    let pfa: Vec<f64> = frames.iter().filter_map(|f| f.pfa).collect();
    let cd: Vec<f64> = frames.iter().filter_map(|f| f.chamfer_m).collect();
    MetricsSummary {
        frames: frames.len(),
        undefined_pd: frames.len() - pd.len(),
        undefined_chamfer: frames.len() - cd.len(),
        pd: mean(pd),
        pfa: mean(pfa),
        chamfer_m: mean(cd),
    }
}

/// Three predictions with the same number of false alarms against one ground
/// truth: isolated ghosts, the target shifted by one azimuth cell, and the
/// target grown by one azimuth cell.
#[derive(Debug, Clone)]
pub struct FalseAlarmFixtures {
    pub gt: OccupancyGrid,
    pub ghost: OccupancyGrid,
    pub shifted: OccupancyGrid,
    pub overestimated: OccupancyGrid,
}

/// Builds [`FalseAlarmFixtures`] around a 3x3 (range, azimuth) block at
/// `(r0, a0)`, elevation `e0`. Needs a few free cells on every side.
pub fn false_alarm_fixtures(grid: &PolarGrid, r0: usize, a0: usize, e0: usize) -> Result<FalseAlarmFixtures> {
    let ghost_r = r0 + 30;
    if ghost_r >= grid.n_range || a0 + 4 >= grid.n_az() || e0 >= grid.n_el() {
        return Err(Error::Config("fixture block does not fit in the grid".into()));
    }
    let block = |da: usize| {
        let mut g = OccupancyGrid::empty(grid.clone());
        for r in r0..r0 + 3 {
            for a in a0 + da..a0 + da + 3 {
                g.set(VoxelIndex { r, a, e: e0 });
            }
        }
        g
    };
    let gt = block(0);
    let mut ghost = gt.clone();
    for k in 0..3 {
        ghost.set(VoxelIndex { r: ghost_r, a: a0 + 2 * k, e: e0 });
    }
    let shifted = block(1);
    let mut overestimated = gt.clone();
    for r in r0..r0 + 3 {
        overestimated.set(VoxelIndex { r, a: a0 + 3, e: e0 });
    }
    Ok(FalseAlarmFixtures { gt, ghost, shifted, overestimated })
}
