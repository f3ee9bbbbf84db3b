//! Lidar-style supervision: field-of-view crop, RANSAC ground removal and
//! voxelization onto the radar's polar grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::PolarGrid;
use crate::types::{OccupancyGrid, PointCloud};

/// Keeps points within `r_max` and inside the grid's azimuth and elevation
/// field of view (forward hemisphere only).
pub fn crop_fov(pc: &PointCloud, grid: &PolarGrid, r_max: f64) -> PointCloud {
    let su = grid.az.fov_deg.to_radians().sin();
    let sw = grid.el.fov_deg.to_radians().sin();
    pc.filter(|_, p| {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if !(r <= r_max) || p[1] < 0.0 {
            return false;
        }
        if r == 0.0 {
            return true;
        }
        (p[0] / r).abs() <= su && (p[2] / r).abs() <= sw
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundParams {
    pub ransac_iters: usize,
    /// Max point-to-plane distance of an inlier (m).
    pub inlier_dist: f64,
    /// Largest plane tilt from horizontal accepted as ground (deg).
    pub max_tilt_deg: f64,
    /// Planes crossing the sensor's vertical axis above this height (m) are
    /// not ground, so roofs of targets are never removed.
    pub max_plane_height: f64,
    /// A ground plane must hold at least this fraction of the points.
    pub min_inlier_fraction: f64,
    /// Ground is the lowest surface: at most this fraction of points may lie
    /// further than `inlier_dist` below it.
    pub max_below_fraction: f64,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self { ransac_iters: 400, inlier_dist: 0.1, max_tilt_deg: 10.0, max_plane_height: -0.5, min_inlier_fraction: 0.1, max_below_fraction: 0.05, seed: 0 }
    }
}

/// Plane `n . p + d = 0` with unit normal pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: [f64; 3],
    pub d: f64,
}

impl Plane {
    fn through(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<Self> {
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let mut n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len < 1e-12 {
            return None;
        }
        let sign = if n[2] < 0.0 { -1.0 } else { 1.0 };
        n.iter_mut().for_each(|x| *x *= sign / len);
        Some(Self { normal: n, d: -(n[0] * a[0] + n[1] * a[1] + n[2] * a[2]) })
    }

    /// Signed distance, positive above the plane.
    pub fn signed_distance(&self, p: &[f64; 3]) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.d
    }

    pub fn distance(&self, p: &[f64; 3]) -> f64 {
        self.signed_distance(p).abs()
    }

    pub fn tilt_deg(&self) -> f64 {
        self.normal[2].clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Height where the plane crosses the z axis.
    pub fn height_at_origin(&self) -> f64 {
        -self.d / self.normal[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundRemoval {
    pub cloud: PointCloud,
    pub plane: Option<Plane>,
    pub removed: usize,
    /// Set when no acceptable ground plane was found; `cloud` is then the input.
    pub warning: bool,
}

/// RANSAC single-plane ground removal, deterministic under `params.seed`.
pub fn remove_ground(pc: &PointCloud, params: &GroundParams) -> GroundRemoval {
    let unchanged = || GroundRemoval { cloud: pc.clone(), plane: None, removed: 0, warning: true };
    let n = pc.len();
    if n < 3 {
        return unchanged();
    }
    let max_below = (params.max_below_fraction * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..params.ransac_iters {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let Some(plane) = Plane::through(pc.points[i], pc.points[j], pc.points[k]) else {
            continue;
        };
        if plane.tilt_deg() > params.max_tilt_deg || plane.height_at_origin() > params.max_plane_height {
            continue;
        }
        let (mut count, mut below) = (0, 0);
        for p in &pc.points {
            let s = plane.signed_distance(p);
            if s.abs() <= params.inlier_dist {
                count += 1;
            } else if s < 0.0 {
                below += 1;
            }
        }
        if below > max_below {
            continue;
        }
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let min_inliers = (params.min_inlier_fraction * n as f64).ceil() as usize;
    let Some((plane, _)) = best.filter(|(_, c)| *c >= min_inliers.max(3)) else {
        log::warn!("no near-horizontal ground plane found among {n} points");
        return unchanged();
    };
    let cloud = pc.filter(|_, p| plane.distance(p) > params.inlier_dist);
    GroundRemoval { removed: n - cloud.len(), cloud, plane: Some(plane), warning: false }
}

/// Marks every voxel holding at least one point; points outside the grid are ignored.
pub fn voxelize(pc: &PointCloud, grid: &PolarGrid) -> OccupancyGrid {
    let mut occ = OccupancyGrid::empty(grid.clone());
    for p in &pc.points {
        if let Some(v) = grid.voxel_index_of(*p) {
            occ.set(v);
        }
    }
    occ
}

/// Crop, remove ground, voxelize.
pub fn build_supervision(
    pc: &PointCloud,
    grid: &PolarGrid,
    r_max: f64,
    params: &GroundParams,
) -> Result<OccupancyGrid> {
    pc.check()?;
    let cropped = crop_fov(pc, grid, r_max);
    let ground = remove_ground(&cropped, params);
    Ok(voxelize(&ground.cloud, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::simulate::{sample_ground_truth_labeled, ExtendedTarget, GroundSpec, PointSource, Scene};
    use crate::waveform::WaveformConfig;
    use proptest::prelude::*;
    use std::collections::{HashSet, VecDeque};

    fn grid() -> PolarGrid {
        PolarGrid::from_config(&WaveformConfig::desk_scale(), &GridConfig::desk_scale()).unwrap()
    }

    fn box_scene(tilt_deg: f64) -> Scene {
        Scene {
            extended_targets: vec![ExtendedTarget {
                // 0.3 m above the (possibly sloped) road under the box center
                center: [1.0, 12.0, -1.5 + 12.0 * tilt_deg.to_radians().tan() + 0.3 + 0.75],
                size: [1.8, 4.2, 1.5],
                velocity: [0.0; 3],
                density: 20.0,
                reflectivity: 1.0,
                radar_scatterers: 12,
            }],
            ground: Some(GroundSpec { density: 4.0, tilt_deg, ..GroundSpec::default() }),
            ..Scene::empty(11)
        }
    }

    #[test]
    fn crop_trivial_cases() {
        let g = grid();
        let pc = PointCloud::from_points(vec![[0.0, 60.0, 0.0], [0.0, 10.0, 0.0], [0.0, -10.0, 0.0]]);
        assert_eq!(crop_fov(&pc, &g, 50.0).points, vec![[0.0, 10.0, 0.0]]);
    }

    fn check_ground_removed(tilt: f64) {
        let scene = box_scene(tilt);
        let (pc, labels) = sample_ground_truth_labeled(&scene, 0);
        let out = remove_ground(&pc, &GroundParams::default());
        assert!(!out.warning);
        let kept: HashSet<[u64; 3]> = out.cloud.points.iter().map(|p| p.map(f64::to_bits)).collect();
        let (mut box_total, mut box_kept) = (0, 0);
        for (p, l) in pc.points.iter().zip(&labels) {
            let present = kept.contains(&p.map(f64::to_bits));
            match l {
                PointSource::Ground => assert!(!present, "ground point kept at tilt {tilt}"),
                _ => {
                    box_total += 1;
                    box_kept += present as usize;
                }
            }
        }
        assert!(box_kept as f64 >= 0.99 * box_total as f64, "{box_kept}/{box_total}");
    }

    #[test]
    fn flat_ground_removed_box_kept() {
        check_ground_removed(0.0);
    }

    #[test]
    fn tilted_ground_removed() {
        check_ground_removed(3.0);
    }

    #[test]
    fn no_ground_leaves_cloud_unchanged() {
        let (pc, labels) = sample_ground_truth_labeled(&box_scene(0.0), 0);
        let box_only = pc.filter(|i, _| labels[i] != PointSource::Ground);
        let out = remove_ground(&box_only, &GroundParams::default());
        assert!(out.warning, "{:?} removed {} of {}", out.plane, out.removed, box_only.len());
        assert_eq!(out.cloud, box_only);
        assert!(remove_ground(&PointCloud::from_points(vec![[0.0; 3]; 2]), &GroundParams::default()).warning);
    }

    #[test]
    fn deterministic_under_seed() {
        let (pc, _) = sample_ground_truth_labeled(&box_scene(1.0), 0);
        let p = GroundParams::default();
        assert_eq!(remove_ground(&pc, &p), remove_ground(&pc, &p));
    }

    #[test]
    fn voxelize_trivial_cases() {
        let g = grid();
        assert_eq!(voxelize(&PointCloud::default(), &g).count(), 0);
        let pc = PointCloud::from_points(vec![[1.0, 10.0, 0.5]; 1000]);
        assert_eq!(voxelize(&pc, &g).count(), 1);
    }

    #[test]
    fn box_surface_gives_connected_shell_in_footprint() {
        let g = grid();
        let scene = box_scene(0.0);
        let (pc, labels) = sample_ground_truth_labeled(&scene, 0);
        let box_only = pc.filter(|i, _| labels[i] != PointSource::Ground);
        let occ = voxelize(&box_only, &g);
        assert!(occ.count() > 10);
        // footprint from the box corners, widened by one cell
        let t = &scene.extended_targets[0];
        let mut corners = Vec::new();
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                for sz in [-0.5, 0.5] {
                    corners.push([t.center[0] + sx * t.size[0], t.center[1] + sy * t.size[1], t.center[2] + sz * t.size[2]]);
                }
            }
        }
        let range = |p: &[f64; 3]| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let r_lo = corners.iter().map(range).fold(f64::MAX, f64::min) - g.range_res;
        let r_hi = corners.iter().map(range).fold(0.0, f64::max) + g.range_res;
        let u_lo = corners.iter().map(|p| p[0] / range(p)).fold(f64::MAX, f64::min) - g.az.spacing();
        let u_hi = corners.iter().map(|p| p[0] / range(p)).fold(f64::MIN, f64::max) + g.az.spacing();
        let cells: HashSet<(usize, usize)> = occ.occupied().map(|v| (v.r, v.a)).collect();
        for &(r, a) in &cells {
            let (rc, uc) = (g.range_center(r), g.az.center(a));
            assert!(rc >= r_lo && rc <= r_hi && uc >= u_lo && uc <= u_hi, "cell ({r}, {a}) outside footprint");
        }
        // 8-connected in (r, a)
        let start = *cells.iter().next().unwrap();
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some((r, a)) = queue.pop_front() {
            for dr in -1i64..=1 {
                for da in -1i64..=1 {
                    let n = ((r as i64 + dr) as usize, (a as i64 + da) as usize);
                    if cells.contains(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        assert_eq!(seen.len(), cells.len());
    }

    #[test]
    fn crop_and_ground_removal_commute_when_ground_inside_fov() {
        let g = grid();
        let mut scene = box_scene(0.0);
        // ground patch well inside the azimuth FoV and range
        scene.ground = Some(GroundSpec { density: 4.0, half_width: 4.0, max_y: 30.0, tilt_deg: 0.0 });
        let (pc, _) = sample_ground_truth_labeled(&scene, 0);
        let p = GroundParams::default();
        let a = remove_ground(&crop_fov(&pc, &g, 50.0), &p).cloud;
        let b = crop_fov(&remove_ground(&pc, &p).cloud, &g, 50.0);
        let set = |c: &PointCloud| c.points.iter().map(|q| q.map(f64::to_bits)).collect::<HashSet<_>>();
        assert_eq!(set(&a), set(&b));
    }

    #[test]
    fn supervision_is_sparse_on_box_scene() {
        let g = grid();
        let (pc, _) = sample_ground_truth_labeled(&box_scene(0.0), 0);
        let occ = build_supervision(&pc, &g, 50.0, &GroundParams::default()).unwrap();
        assert!(occ.fraction() > 0.0 && occ.fraction() < 0.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn voxelize_is_monotone(
            base in prop::collection::vec((-20.0f64..20.0, 0.0f64..30.0, -5.0f64..5.0), 0..60),
            extra in prop::collection::vec((-20.0f64..20.0, 0.0f64..30.0, -5.0f64..5.0), 0..60),
        ) {
            let g = grid();
            let a: Vec<[f64; 3]> = base.iter().map(|&(x, y, z)| [x, y, z]).collect();
            let mut b = a.clone();
            b.extend(extra.iter().map(|&(x, y, z)| [x, y, z]));
            let va = voxelize(&PointCloud::from_points(a), &g);
            let vb = voxelize(&PointCloud::from_points(b), &g);
            for (x, y) in va.occ.iter().zip(&vb.occ) {
                prop_assert!(*x <= *y);
            }
        }
    }
}
