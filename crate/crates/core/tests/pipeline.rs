use radelft_core::pipeline::{
    process_frame, process_frame_detailed, range_doppler_map, ProcessingConfig, TdmaMode,
};
use radelft_core::simulate::{synthesize_adc, Scatterer, Scene};
use radelft_core::waveform::SPEED_OF_LIGHT;
use radelft_core::{ArrayGeometry, GridConfig, PolarGrid, RadarCube, WaveformConfig};

fn desk() -> (WaveformConfig, ArrayGeometry, PolarGrid) {
    let wf = WaveformConfig::desk_scale();
    let grid = PolarGrid::from_config(&wf, &GridConfig::desk_scale()).unwrap();
    (wf, ArrayGeometry::cascade_12x16(), grid)
}

fn scene(points: &[([f64; 3], [f64; 3])], seed: u64) -> Scene {
    Scene {
        scatterers: points
            .iter()
            .map(|&(position, velocity)| Scatterer { position, velocity, rcs_amplitude: 1.0 })
            .collect(),
        ..Scene::empty(seed)
    }
}

/// Range of beat-frequency bin `k` for an `n`-point fast-time transform.
fn bin_range(wf: &WaveformConfig, k: f64, n: usize) -> f64 {
    k * SPEED_OF_LIGHT * wf.f_s / (2.0 * wf.slope * n as f64)
}

/// (r, d, a) of the strongest cell.
fn peak(cube: &RadarCube) -> (usize, usize, usize) {
    let [nr, nd, na] = cube.shape();
    let mut best = (0, 0, 0, f64::NEG_INFINITY);
    for r in 0..nr {
        for d in 0..nd {
            for a in 0..na {
                let p = cube.power[cube.index(r, d, a)];
                if p > best.3 {
                    best = (r, d, a, p);
                }
            }
        }
    }
    (best.0, best.1, best.2)
}

/// Max over Doppler, as an `[R x A]` map.
fn range_azimuth(cube: &RadarCube) -> Vec<f64> {
    let [nr, nd, na] = cube.shape();
    let mut out = vec![0.0; nr * na];
    for r in 0..nr {
        for a in 0..na {
            out[r * na + a] = (0..nd).map(|d| cube.power[cube.index(r, d, a)]).fold(0.0, f64::max);
        }
    }
    out
}

/// Full-scale angular axes with a short range axis.
fn fine_angles(wf: &WaveformConfig) -> PolarGrid {
    PolarGrid::from_config(wf, &GridConfig { n_range: 80, ..GridConfig::full_scale() }).unwrap()
}

fn nearest_bin(centers: &[f64], s: f64) -> usize {
    let mut best = 0;
    for (i, c) in centers.iter().enumerate() {
        if (c - s).abs() < (centers[best] - s).abs() {
            best = i;
        }
    }
    best
}

#[test]
fn boresight_target_peaks_at_zero_sines() {
    let (wf, geom, grid) = desk();
    let frame = synthesize_adc(&scene(&[([0.0, 10.0, 0.0], [0.0; 3])], 1), &wf, &geom, 0.0, 0).unwrap();
    let cube = process_frame(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
    let (r, d, a) = peak(&cube);
    assert!((grid.range_center(r) - 10.0).abs() <= grid.range_res);
    assert_eq!(d, grid.n_doppler / 2);
    assert_eq!(a, nearest_bin(&grid.az_sin_centers(), 0.0));
    assert_eq!(cube.elev_argmax[cube.index(r, d, a)] as usize, nearest_bin(&grid.el_sin_centers(), 0.0));
}

#[test]
fn thirty_degree_target_peaks_at_sine_one_half() {
    let (wf, geom, _) = desk();
    let grid = fine_angles(&wf);
    let th = 30f64.to_radians();
    let p = [12.0 * th.sin(), 12.0 * th.cos(), 0.0];
    let frame = synthesize_adc(&scene(&[(p, [0.0; 3])], 2), &wf, &geom, 0.0, 0).unwrap();
    let cube = process_frame(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
    let (_, _, a) = peak(&cube);
    assert_eq!(a, nearest_bin(&grid.az_sin_centers(), 0.5));
}

#[test]
fn elevated_target_selects_matching_elevation_bin() {
    let (wf, geom, grid) = desk();
    let el = 10f64.to_radians();
    let p = [0.0, 12.0 * el.cos(), 12.0 * el.sin()];
    let frame = synthesize_adc(&scene(&[(p, [0.0; 3])], 2), &wf, &geom, 0.0, 0).unwrap();
    let cube = process_frame(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
    let (r, d, a) = peak(&cube);
    let e = cube.elev_argmax[cube.index(r, d, a)] as usize;
    assert!(e.abs_diff(nearest_bin(&grid.el_sin_centers(), el.sin())) <= 1);
}

/// Local maxima of a 2D map above `floor` (8-neighborhood, ties broken by index).
fn local_maxima(map: &[f64], rows: usize, cols: usize, floor: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = map[r * cols + c];
            if v < floor {
                continue;
            }
            let mut is_max = true;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= rows as i64 || cc >= cols as i64 {
                        continue;
                    }
                    let w = map[rr as usize * cols + cc as usize];
                    let idx = rr as usize * cols + cc as usize;
                    if w > v || (w == v && idx < r * cols + c) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((r, c));
            }
        }
    }
    out
}

#[test]
fn one_point_target_has_one_dominant_maximum() {
    let (wf, geom, grid) = desk();
    for (k, p) in [[3.0, 14.0, 0.0], [-6.0, 8.0, 0.5], [0.0, 20.0, -1.0]].into_iter().enumerate() {
        let frame = synthesize_adc(&scene(&[(p, [0.0; 3])], k as u64), &wf, &geom, 1e-2, 0).unwrap();
        let cube = process_frame(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
        let ra = range_azimuth(&cube);
        let top = ra.iter().copied().fold(0.0, f64::max);
        // the sparse elevation rows leave azimuth sidelobes near -12 dB
        let maxima = local_maxima(&ra, grid.n_range, grid.n_az(), top * 0.1);
        assert_eq!(maxima.len(), 1, "{p:?}: {maxima:?}");
    }
}

/// Local maxima of the range profile through the strongest cell, within
/// 20 dB of its peak.
fn range_peaks(first: f64, second: f64, seed: u64) -> usize {
    let (wf, geom, grid) = desk();
    let frame = synthesize_adc(
        &scene(&[([0.0, first, 0.0], [0.0; 3]), ([0.0, second, 0.0], [0.0; 3])], seed),
        &wf,
        &geom,
        0.0,
        0,
    )
    .unwrap();
    let cube = process_frame(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
    let (_, d, a) = peak(&cube);
    let profile: Vec<f64> = (0..grid.n_range).map(|r| cube.power[cube.index(r, d, a)]).collect();
    let top = profile.iter().copied().fold(0.0, f64::max);
    local_maxima(&profile, grid.n_range, 1, top * 1e-2).len()
}

#[test]
fn range_resolution() {
    let wf = WaveformConfig::desk_scale();
    let n = GridConfig::desk_scale().range_fft;
    for start in [bin_range(&wf, 50.0, n), 10.0, 10.05, 12.13] {
        assert_eq!(range_peaks(start, start + 0.4, 4), 2, "0.4 m apart from {start}");
        assert_eq!(range_peaks(start, start + 0.1, 4), 1, "0.1 m apart from {start}");
    }
}

#[test]
fn velocity_unfolding_sweep() {
    let (wf, geom, grid) = desk();
    let d = wf.derived().unwrap();
    let tol = d.v_res.max(0.1);
    let boundaries: Vec<f64> = (-4..=4).map(|m| (2 * m + 1) as f64 * d.v_max).collect();
    let mut checked = 0;
    for i in 0..=68 {
        let v = -17.0 + 0.5 * i as f64;
        if boundaries.iter().any(|b| (v - b).abs() < 0.05) {
            continue;
        }
        let frame = synthesize_adc(&scene(&[([0.0, 15.0, 0.0], [0.0, v, 0.0])], 9), &wf, &geom, 1e-3, 0).unwrap();
        let out = process_frame_detailed(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
        let (r, dd, _) = peak(&out.cube);
        let got = out.velocity[r * grid.n_doppler + dd];
        assert!((got - v).abs() <= tol, "v {v}: got {got}");
        checked += 1;
    }
    assert!(checked >= 65);
}

#[test]
fn compensation_removes_azimuth_bias() {
    let (wf, geom, _) = desk();
    let grid = fine_angles(&wf);
    let th = 20f64.to_radians();
    let dir = [th.sin(), th.cos(), 0.0];
    let p = [14.0 * dir[0], 14.0 * dir[1], 0.0];
    let v = [5.0 * dir[0], 5.0 * dir[1], 0.0];
    let frame = synthesize_adc(&scene(&[(p, v)], 5), &wf, &geom, 1e-3, 0).unwrap();
    let truth = nearest_bin(&grid.az_sin_centers(), th.sin());
    let az = |mode| {
        let cfg = ProcessingConfig { tdma: mode, ..ProcessingConfig::default() };
        peak(&process_frame(&frame, &wf, &geom, &grid, &cfg).unwrap()).2
    };
    let off = az(TdmaMode::Off);
    let on = az(TdmaMode::Unfolded);
    assert!(off.abs_diff(truth) >= 2, "uncompensated bin {off}, truth {truth}");
    assert!(on.abs_diff(truth) <= 1, "compensated bin {on}, truth {truth}");
}

#[test]
fn noise_only_frames_have_no_persistent_outliers() {
    let (wf, geom, grid) = desk();
    let empty = Scene::empty(17);
    let mut hits: Option<Vec<bool>> = None;
    for f in 0..3 {
        let frame = synthesize_adc(&empty, &wf, &geom, 1.0, f).unwrap();
        let cube = process_frame(&frame, &wf, &geom, &grid, &ProcessingConfig::default()).unwrap();
        let n = cube.power.len() as f64;
        let mean = cube.power.iter().sum::<f64>() / n;
        let sd = (cube.power.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
        let above: Vec<bool> = cube.power.iter().map(|p| *p > mean + 10.0 * sd).collect();
        hits = Some(match hits {
            None => above,
            Some(h) => h.iter().zip(&above).map(|(a, b)| *a && *b).collect(),
        });
    }
    assert!(!hits.unwrap().iter().any(|h| *h));
}

#[test]
fn range_doppler_bin_of_moving_target() {
    let (wf, geom, _) = desk();
    let d = wf.derived().unwrap();
    let frame = synthesize_adc(&scene(&[([0.0, 10.0, 0.0], [0.0, 1.0, 0.0])], 1), &wf, &geom, 0.0, 0).unwrap();
    let rd = range_doppler_map(&frame, &wf, wf.n_adc).unwrap();
    let mut best = (0, 0, 0.0);
    for r in 0..rd.n_range {
        for dd in 0..rd.n_doppler {
            if rd.cell_power(r, dd) > best.2 {
                best = (r, dd, rd.cell_power(r, dd));
            }
        }
    }
    let offset = best.1 as i64 - (rd.n_doppler / 2) as i64;
    assert_eq!(offset, (1.0 / d.v_res).round() as i64);
}

#[test]
fn single_row_array_reduces_to_azimuth_transform() {
    let wf = WaveformConfig { n_tx: 1, n_rx: 16, n_chirps: 16, ..WaveformConfig::desk_scale() };
    let geom = ArrayGeometry::uniform_linear(16);
    let grid = PolarGrid::from_config(&wf, &GridConfig { n_range: 64, ..GridConfig::desk_scale() }).unwrap();
    let th = -25f64.to_radians();
    let frame = synthesize_adc(&scene(&[([9.0 * th.sin(), 9.0 * th.cos(), 0.0], [0.0; 3])], 8), &wf, &geom, 1e-2, 0)
        .unwrap();
    let rd = range_doppler_map(&frame, &wf, 256).unwrap();
    let cube = radelft_core::pipeline::doa_estimate(&rd, &geom, &grid, 0.0).unwrap();
    assert!(cube.elev_argmax.iter().all(|&e| e == 0));
    let (r, d, a) = peak(&cube);
    // direct 1D Hamming-weighted DFT of the same cell
    let w = radelft_core::pipeline::hamming(16);
    let x = rd.cell(r, d);
    let dft = |s: f64| {
        x.iter()
            .enumerate()
            .map(|(n, v)| v * w[n] * radelft_core::Complex64::from_polar(1.0, -std::f64::consts::PI * s * n as f64))
            .sum::<radelft_core::Complex64>()
            .norm_sqr()
    };
    for (i, s) in grid.az_sin_centers().iter().enumerate() {
        let p = cube.power[cube.index(r, d, i)];
        assert!((p - dft(*s)).abs() <= 1e-9 * dft(grid.az_sin_centers()[a]), "bin {i}");
    }
}
