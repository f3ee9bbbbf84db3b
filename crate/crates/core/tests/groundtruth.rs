use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radelft_core::groundtruth::{build_supervision, crop_fov, remove_ground, voxelize, GroundParams};
use radelft_core::simulate::{random_scene, sample_ground_truth_labeled, PointSource, RandomSceneConfig};
use radelft_core::{GridConfig, PointCloud, PolarGrid, WaveformConfig};

fn desk_grid() -> PolarGrid {
    PolarGrid::from_config(&WaveformConfig::desk_scale(), &GridConfig::desk_scale()).unwrap()
}

/// Solid angle of `{|x/r| <= a, |z/r| <= b, y > 0}` by midpoint quadrature of
/// `int 2 asin(min(1, b / sqrt(1 - u^2))) du` over `|u| <= a`.
fn window_solid_angle(a: f64, b: f64) -> f64 {
    let n = 200_000;
    let h = 2.0 * a / n as f64;
    (0..n)
        .map(|i| {
            let u = -a + (i as f64 + 0.5) * h;
            2.0 * (b / (1.0 - u * u).sqrt()).min(1.0).asin() * h
        })
        .sum()
}

#[test]
fn crop_keeps_solid_angle_times_volume_fraction() {
    let grid = desk_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (outer, r_max) = (60.0, 50.0);
    let n = 400_000;
    let points: Vec<[f64; 3]> = (0..n)
        .map(|_| loop {
            let p = [0, 1, 2].map(|_| rng.random_range(-outer..outer));
            if p.iter().map(|c| c * c).sum::<f64>() <= outer * outer {
                break p;
            }
        })
        .collect();
    let kept = crop_fov(&PointCloud::from_points(points), &grid, r_max).len() as f64;
    let (a, b) = (grid.az.fov_deg.to_radians().sin(), grid.el.fov_deg.to_radians().sin());
    let p = window_solid_angle(a, b) / (4.0 * std::f64::consts::PI) * (r_max / outer).powi(3);
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((kept - n as f64 * p).abs() < 4.0 * sigma, "kept {kept}, expected {}", n as f64 * p);
}

#[test]
fn random_scenes_keep_targets_and_drop_ground() {
    let params = GroundParams::default();
    for seed in 0..5 {
        let scene = random_scene(seed, &RandomSceneConfig::default());
        let (cloud, labels) = sample_ground_truth_labeled(&scene, 0);
        let out = remove_ground(&cloud, &params);
        assert!(!out.warning, "seed {seed}");
        let kept: std::collections::HashSet<[u64; 3]> =
            out.cloud.points.iter().map(|p| p.map(f64::to_bits)).collect();
        let mut ground_left = 0;
        let (mut target_total, mut target_kept) = (0, 0);
        for (p, l) in cloud.points.iter().zip(&labels) {
            let k = kept.contains(&p.map(f64::to_bits));
            match l {
                PointSource::Ground => ground_left += k as usize,
                _ => {
                    target_total += 1;
                    target_kept += k as usize;
                }
            }
        }
        assert_eq!(ground_left, 0, "seed {seed}");
        // cyclists and pedestrians stand on the road: their lowest 0.1 m strip
        // is indistinguishable from ground
        assert!(target_kept as f64 >= 0.9 * target_total as f64, "seed {seed}: {target_kept}/{target_total}");
    }
}

#[test]
fn supervision_sparsity_is_tracked() {
    let grid = desk_grid();
    let mut fractions = Vec::new();
    for seed in 0..4 {
        let scene = random_scene(seed, &RandomSceneConfig::default());
        let (cloud, _) = sample_ground_truth_labeled(&scene, 0);
        let occ = build_supervision(&cloud, &grid, grid.max_range(), &GroundParams::default()).unwrap();
        fractions.push(occ.fraction());
        let direct = voxelize(&remove_ground(&crop_fov(&cloud, &grid, grid.max_range()), &GroundParams::default()).cloud, &grid);
        assert_eq!(direct.occ, occ.occ);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    eprintln!("occupied voxel fraction per scene: {fractions:?} (mean {mean:.4})");
    assert!(mean > 0.0 && mean < 0.05);
}
