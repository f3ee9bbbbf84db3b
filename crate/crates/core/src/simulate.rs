//! Parametric scenes, synthetic ADC frames, and paired pseudo-lidar clouds.
//!
//! Radar returns follow the dechirped FMCW model with a stop-and-go
//! approximation: each chirp sees the reflector at its position at the chirp
//! start. Transmitters fire in TDMA order, so chirp `s * n_tx + k` is sent by
//! Tx `k` at `(s * n_tx + k) * (chirp_len + idle)` after the frame start.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::ArrayGeometry;
use crate::error::{Error, Result};
use crate::types::{AdcFrame, PointCloud};
use crate::waveform::WaveformConfig;

/// Point reflector. Position at t = 0, constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Linear voltage gain of the return.
    pub rcs_amplitude: f64,
}

impl Scatterer {
    pub fn at(&self, t: f64) -> [f64; 3] {
        add(self.position, scale(self.velocity, t))
    }
}

/// Axis-aligned box target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedTarget {
    pub center: [f64; 3],
    /// (width along x, length along y, height along z) in m.
    pub size: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Lidar samples per m^2 of exposed surface.
    pub density: f64,
    /// Voltage gain of each radar reflector on the surface.
    pub reflectivity: f64,
    /// Number of radar reflectors placed on the faces seen by the sensor.
    #[serde(default = "default_radar_scatterers")]
    pub radar_scatterers: usize,
}

fn default_radar_scatterers() -> usize {
    12
}

/// Flat (optionally tilted) road surface seen by the lidar only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    /// Samples per m^2.
    pub density: f64,
    pub half_width: f64,
    pub max_y: f64,
    /// Upward slope along +y, in degrees.
    #[serde(default)]
    pub tilt_deg: f64,
}

impl Default for GroundSpec {
    fn default() -> Self {
        Self { density: 1.0, half_width: 15.0, max_y: 30.0, tilt_deg: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub scatterers: Vec<Scatterer>,
    #[serde(default)]
    pub extended_targets: Vec<ExtendedTarget>,
    pub duration: f64,
    pub frame_rate: f64,
    pub rng_seed: u64,
    /// Sensor height above the ground plane (m); ground sits at z = -sensor_height.
    #[serde(default = "default_sensor_height")]
    pub sensor_height: f64,
    #[serde(default)]
    pub ground: Option<GroundSpec>,
}

fn default_sensor_height() -> f64 {
    1.5
}

/// Where a ground-truth point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Scatterer(usize),
    Target(usize),
    Ground,
}

impl Scene {
    pub fn empty(rng_seed: u64) -> Self {
        Self {
            scatterers: Vec::new(),
            extended_targets: Vec::new(),
            duration: 1.0,
            frame_rate: 10.0,
            rng_seed,
            sensor_height: default_sensor_height(),
            ground: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config(format!("frame_rate must be positive, got {}", self.frame_rate)));
        }
        if !(self.duration >= 0.0) {
            return Err(Error::Config("duration must be non-negative".into()));
        }
        for t in &self.extended_targets {
            if t.size.iter().any(|s| !(*s > 0.0)) || !(t.density >= 0.0) {
                return Err(Error::Config("extended target needs positive size and density".into()));
            }
        }
        let finite = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        if self.scatterers.iter().any(|s| !finite(&s.position) || !finite(&s.velocity)) {
            return Err(Error::Config("scatterer state must be finite".into()));
        }
        Ok(())
    }

    pub fn frame_time(&self, frame_index: usize) -> f64 {
        frame_index as f64 / self.frame_rate
    }

    pub fn n_frames(&self) -> usize {
        ((self.duration * self.frame_rate).floor() as usize).max(1)
    }

    /// All radar reflectors (point scatterers plus reflectors on extended
    /// targets), with positions at t = 0.
    pub fn radar_reflectors(&self) -> Vec<Scatterer> {
        let mut out = self.scatterers.clone();
        for (i, t) in self.extended_targets.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(self.rng_seed, 0x5EED_0000 + i as u64));
            let faces: Vec<Face> = box_faces(t).into_iter().filter(|f| f.faces_origin()).collect();
            let total: f64 = faces.iter().map(|f| f.area()).sum();
            if total <= 0.0 {
                continue;
            }
            for _ in 0..t.radar_scatterers {
                let mut pick = rng.random::<f64>() * total;
                let mut face = &faces[faces.len() - 1];
                for f in &faces {
                    if pick < f.area() {
                        face = f;
                        break;
                    }
                    pick -= f.area();
                }
                out.push(Scatterer {
                    position: face.sample(&mut rng),
                    velocity: t.velocity,
                    rcs_amplitude: t.reflectivity,
                });
            }
        }
        out
    }
}

#[inline]
fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// SplitMix64-style seed mixing.
fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Axis-aligned rectangle: `origin + s * du + t * dv`, s, t in [0, 1].
struct Face {
    origin: [f64; 3],
    du: [f64; 3],
    dv: [f64; 3],
    normal: [f64; 3],
}

impl Face {
    fn area(&self) -> f64 {
        norm(self.du) * norm(self.dv)
    }

    fn center(&self) -> [f64; 3] {
        add(self.origin, scale(add(self.du, self.dv), 0.5))
    }

    /// True when the outward normal points toward the sensor at the origin.
    fn faces_origin(&self) -> bool {
        let c = self.center();
        -(c[0] * self.normal[0] + c[1] * self.normal[1] + c[2] * self.normal[2]) > 0.0
    }

    fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        let (s, t): (f64, f64) = (rng.random(), rng.random());
        add(self.origin, add(scale(self.du, s), scale(self.dv, t)))
    }
}

/// Top and four side faces (the bottom rests on or faces the road).
fn box_faces(t: &ExtendedTarget) -> Vec<Face> {
    let [w, l, h] = t.size;
    let lo = [t.center[0] - w / 2.0, t.center[1] - l / 2.0, t.center[2] - h / 2.0];
    let ex = [w, 0.0, 0.0];
    let ey = [0.0, l, 0.0];
    let ez = [0.0, 0.0, h];
    vec![
        Face { origin: add(lo, ez), du: ex, dv: ey, normal: [0.0, 0.0, 1.0] },
        Face { origin: lo, du: ex, dv: ez, normal: [0.0, -1.0, 0.0] },
        Face { origin: add(lo, ey), du: ex, dv: ez, normal: [0.0, 1.0, 0.0] },
        Face { origin: lo, du: ey, dv: ez, normal: [-1.0, 0.0, 0.0] },
        Face { origin: add(lo, ex), du: ey, dv: ez, normal: [1.0, 0.0, 0.0] },
    ]
}

/// Exposed (non-bottom) surface area of a box target.
pub fn exposed_area(t: &ExtendedTarget) -> f64 {
    box_faces(t).iter().map(Face::area).sum()
}

/// Splits `total` samples over faces proportionally to area (largest remainder).
fn allocate(total: usize, areas: &[f64]) -> Vec<usize> {
    let sum: f64 = areas.iter().sum();
    if sum <= 0.0 {
        return vec![0; areas.len()];
    }
    let exact: Vec<f64> = areas.iter().map(|a| a / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..areas.len()).collect();
    rest.sort_by(|&i, &j| {
        let (fi, fj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Synthesizes one CPI of complex baseband samples.
pub fn synthesize_adc(
    scene: &Scene,
    cfg: &WaveformConfig,
    geom: &ArrayGeometry,
    noise_power: f64,
    frame_index: usize,
) -> Result<AdcFrame> {
    scene.validate()?;
    let derived = cfg.derived()?;
    geom.check_tx_count(cfg.n_tx, cfg.n_rx)?;
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(Error::Config(format!("noise power must be >= 0, got {noise_power}")));
    }
    let t0 = scene.frame_time(frame_index);
    let n_tx = cfg.n_tx;
    let n_rx = cfg.n_rx;
    let n_slow = cfg.n_chirps;
    let n_fast = cfg.n_adc;
    let mut frame = AdcFrame::zeros(n_fast, n_slow, geom.n_virtual(), n_tx, t0);
    let lambda = cfg.wavelength();
    let tx_step = cfg.tx_step();
    let frame_span = (n_slow * n_tx) as f64 * tx_step;
    let n_vchan = frame.n_vchan;

    let mut fast = vec![Complex64::new(0.0, 0.0); n_fast];
    for s in scene.radar_reflectors() {
        let start = s.at(t0);
        let end = s.at(t0 + frame_span);
        for p in [start, end] {
            let r = norm(p);
            if !(r > 0.0 && r < derived.r_max) {
                return Err(Error::BeyondMaxRange { range: r, r_max: derived.r_max });
            }
        }
        let r0 = norm(start);
        let (u, w) = (start[0] / r0, start[2] / r0);
        let chan_phasor: Vec<Complex64> = geom
            .virtual_elements()
            .iter()
            .map(|v| Complex64::from_polar(1.0, PI * (u * v.pos.x as f64 + w * v.pos.z as f64)))
            .collect();
        for slow in 0..n_slow {
            for k in 0..n_tx {
                let tau = (slow * n_tx + k) as f64 * tx_step;
                let range = norm(s.at(t0 + tau));
                let f_b = cfg.beat_frequency(range);
                let phi_dopp = 4.0 * PI * range / lambda;
                for (n, f) in fast.iter_mut().enumerate() {
                    let phase = 2.0 * PI * f_b * n as f64 / cfg.f_s + phi_dopp;
                    *f = Complex64::from_polar(s.rcs_amplitude, phase);
                }
                let chans = k * n_rx..(k + 1) * n_rx;
                for (n, f) in fast.iter().enumerate() {
                    let base = (n * n_slow + slow) * n_vchan;
                    let row = &mut frame.data[base + chans.start..base + chans.end];
                    for (x, ph) in row.iter_mut().zip(&chan_phasor[chans.clone()]) {
                        *x += f * ph;
                    }
                }
            }
        }
    }

    if noise_power > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(scene.rng_seed, frame_index as u64));
        let sigma = (noise_power / 2.0).sqrt();
        for x in frame.data.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *x += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(frame)
}

/// Pseudo-lidar cloud for a frame, with the origin of each point.
pub fn sample_ground_truth_labeled(scene: &Scene, frame_index: usize) -> (PointCloud, Vec<PointSource>) {
    let t = scene.frame_time(frame_index);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, target) in scene.extended_targets.iter().enumerate() {
        // Seeded per target, not per frame: the sampled surface moves rigidly.
        let mut rng = ChaCha8Rng::seed_from_u64(mix(scene.rng_seed, 0x1D_A000 + i as u64));
        let faces = box_faces(target);
        let total = (target.density * exposed_area(target)).ceil() as usize;
        let areas: Vec<f64> = faces.iter().map(Face::area).collect();
        let offset = scale(target.velocity, t);
        for (face, count) in faces.iter().zip(allocate(total, &areas)) {
            for _ in 0..count {
                points.push(add(face.sample(&mut rng), offset));
                labels.push(PointSource::Target(i));
            }
        }
    }
    for (i, s) in scene.scatterers.iter().enumerate() {
        points.push(s.at(t));
        labels.push(PointSource::Scatterer(i));
    }
    let ground = scene.ground.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(scene.rng_seed, 0x6_0000));
    let n_ground = (ground.density * 2.0 * ground.half_width * ground.max_y).ceil() as usize;
    let slope = ground.tilt_deg.to_radians().tan();
    for _ in 0..n_ground {
        let x = (rng.random::<f64>() * 2.0 - 1.0) * ground.half_width;
        let y = rng.random::<f64>() * ground.max_y;
        points.push([x, y, -scene.sensor_height + y * slope]);
        labels.push(PointSource::Ground);
    }
    (PointCloud::from_points(points), labels)
}

/// Pseudo-lidar cloud for a frame: target surfaces, point scatterers, and ground.
pub fn sample_ground_truth(scene: &Scene, frame_index: usize) -> PointCloud {
    sample_ground_truth_labeled(scene, frame_index).0
}

/// Knobs for [`random_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSceneConfig {
    pub min_targets: usize,
    pub max_targets: usize,
    pub min_range: f64,
    pub max_range: f64,
    /// Largest |azimuth| of a target center, degrees.
    pub max_azimuth_deg: f64,
    pub max_speed: f64,
    pub reflectivity: (f64, f64),
    pub density: f64,
    pub radar_scatterers: usize,
    pub frames: usize,
    pub frame_rate: f64,
}

impl Default for RandomSceneConfig {
    fn default() -> Self {
        Self {
            min_targets: 2,
            max_targets: 5,
            min_range: 4.0,
            max_range: 22.0,
            max_azimuth_deg: 50.0,
            max_speed: 8.0,
            reflectivity: (0.5, 2.0),
            density: 8.0,
            radar_scatterers: 12,
            frames: 4,
            frame_rate: 10.0,
        }
    }
}

/// A street-like scene of cars, cyclists and pedestrians, seeded.
pub fn random_scene(seed: u64, cfg: &RandomSceneConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xC0FFEE));
    let n = rng.random_range(cfg.min_targets..=cfg.max_targets.max(cfg.min_targets));
    let sensor_height = default_sensor_height();
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        // (w, l, h, ground clearance)
        let kind = rng.random_range(0..3);
        let (size, clearance) = match kind {
            0 => ([1.8, 4.2, 1.5], 0.2),
            1 => ([0.6, 1.8, 1.6], 0.0),
            _ => ([0.6, 0.6, 1.8], 0.0),
        };
        let range = rng.random_range(cfg.min_range..cfg.max_range);
        let az = rng.random_range(-cfg.max_azimuth_deg..cfg.max_azimuth_deg).to_radians();
        let heading = rng.random_range(0.0..2.0 * PI);
        let speed = rng.random_range(0.0..cfg.max_speed);
        let refl = rng.random_range(cfg.reflectivity.0..cfg.reflectivity.1);
        targets.push(ExtendedTarget {
            center: [range * az.sin(), range * az.cos(), -sensor_height + clearance + size[2] / 2.0],
            size,
            velocity: [speed * heading.cos() * 0.3, speed * heading.sin(), 0.0],
            density: cfg.density,
            reflectivity: refl,
            radar_scatterers: cfg.radar_scatterers,
        });
    }
    Scene {
        scatterers: Vec::new(),
        extended_targets: targets,
        duration: cfg.frames as f64 / cfg.frame_rate,
        frame_rate: cfg.frame_rate,
        rng_seed: seed,
        sensor_height,
        ground: Some(GroundSpec::default()),
    }
}
