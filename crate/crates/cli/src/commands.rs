//! One function per subcommand. Each reads its inputs through the manifest
//! of a run directory and writes products plus an updated manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use radelft_core::cfar::cascade_detect;
use radelft_core::eval::{frame_metrics, roc_sweep, summarize, threshold_probabilities, FrameMetrics, MetricsSummary, RocPoint};
use radelft_core::neural::{train_model, Ablations, DetectorModel, TrainLog};
use radelft_core::simulate::{random_scene, Scene};
use radelft_core::{grid_to_point_cloud, OccupancyGrid, PolarGrid, RadarCube};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::Config;
use crate::dataset::{predict_probabilities, training_windows, LabeledFrame, Setup};
use crate::formats::{bird_eye_view, csv_string, ply_string, write_bytes, write_text};
use crate::manifest::{FrameRecord, Manifest};
use crate::storage::{self, ArtifactKind, RawTensor, TensorData};

/// Name of the effective configuration written into every run directory.
pub const RUN_CONFIG: &str = "config.json";

/// `--config` if given, else the run directory's stored configuration, else defaults.
pub fn resolve_config(explicit: Option<&Path>, run: Option<&Path>) -> Result<Config> {
    if let Some(p) = explicit {
        return Config::load(Some(p)).with_context(|| format!("loading config {}", p.display()));
    }
    if let Some(stored) = run.map(|r| r.join(RUN_CONFIG)).filter(|p| p.exists()) {
        return Config::load(Some(&stored)).with_context(|| format!("loading config {}", stored.display()));
    }
    Ok(Config::default())
}

fn apply_ablations(cfg: &mut Config, ablations: &[String]) -> Result<()> {
    if !ablations.is_empty() {
        cfg.detector.ablations = Ablations::parse_list(ablations)?;
    }
    Ok(())
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_config(dir: &Path, cfg: &Config) -> Result<()> {
    write_text(&dir.join(RUN_CONFIG), &(serde_json::to_string_pretty(cfg)? + "\n"))?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Scene file (or a seeded random scene) to ADC frames, raw ground-truth
/// clouds and a manifest.
pub fn simulate(args: &SimulateArgs) -> Result<Manifest> {
    let cfg = resolve_config(args.config.as_deref(), None)?;
    let seed = args.seed.unwrap_or(0);
    let scene: Scene = match &args.scene {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading scene {}", p.display()))?;
            let mut s: Scene = serde_json::from_str(&text).with_context(|| format!("parsing scene {}", p.display()))?;
            if let Some(seed) = args.seed {
                s.rng_seed = seed;
            }
            s
        }
        None => random_scene(seed, &cfg.simulate.random_scene),
    };
    scene.validate()?;
    prepare_out(&args.out)?;
    let setup = Setup::from_config(&cfg)?;
    let records: Vec<FrameRecord> = (0..scene.n_frames())
        .into_par_iter()
        .map(|i| -> Result<FrameRecord> {
            let (adc, lidar) = setup.simulate(&scene, i)?;
            let t = scene.frame_time(i);
            let adc_path = args.out.join(format!("adc_{i:04}.json"));
            let gt_path = args.out.join(format!("gt_{i:04}.json"));
            storage::write_adc(&adc_path, &adc)?;
            storage::write_cloud(&gt_path, &lidar, Some(t))?;
            Ok(FrameRecord {
                index: i,
                radar_timestamp: adc.timestamp,
                gt_timestamp: Some(t),
                files: [("adc".to_string(), adc_path), ("gt".to_string(), gt_path)].into(),
            })
        })
        .collect::<Result<_>>()?;
    let mut manifest = Manifest::new(&args.out, scene.rng_seed, cfg.eval.max_skew);
    manifest.frames = records;
    write_text(&args.out.join("scene.json"), &(serde_json::to_string_pretty(&scene)? + "\n"))?;
    write_config(&args.out, &cfg)?;
    manifest.save(&args.out)?;
    log::info!("simulated {} frames into {}", manifest.frames.len(), args.out.display());
    Ok(manifest)
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub input: PathBuf,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn out(&self) -> &Path {
        self.out.as_deref().unwrap_or(&self.input)
    }
}

/// Loads the run manifest and configuration, and prepares the output directory.
fn open_run(args: &RunArgs, roles: &[&str]) -> Result<(Manifest, Config)> {
    let manifest = Manifest::load(&args.input)?;
    manifest.check_pairing(roles)?;
    let cfg = resolve_config(args.config.as_deref(), Some(&args.input))?;
    prepare_out(args.out())?;
    Ok((manifest, cfg))
}

fn finish_run(manifest: &Manifest, cfg: &Config, out: &Path) -> Result<()> {
    if !out.join(RUN_CONFIG).exists() {
        write_config(out, cfg)?;
    }
    manifest.save(out)?;
    Ok(())
}

/// ADC frames to radar cubes.
pub fn process(args: &RunArgs) -> Result<Manifest> {
    let (mut manifest, cfg) = open_run(args, &["adc"])?;
    let setup = Setup::from_config(&cfg)?;
    let out = args.out();
    let cubes: Vec<PathBuf> = (0..manifest.frames.len())
        .into_par_iter()
        .map(|i| -> Result<PathBuf> {
            let adc = storage::read_adc(&manifest.file(i, "adc")?)?;
            let cube = setup.process(&adc)?;
            let path = out.join(format!("cube_{:04}.json", manifest.frames[i].index));
            storage::write_cube(&path, &cube)?;
            Ok(path)
        })
        .collect::<Result<_>>()?;
    for (f, p) in manifest.frames.iter_mut().zip(cubes) {
        f.files.insert("cube".into(), p);
    }
    finish_run(&manifest, &cfg, out)?;
    Ok(manifest)
}

/// Writes one prediction set: occupancy sidecars, optional probabilities,
/// and PLY exports carrying Doppler and power from the cube.
fn write_predictions(
    manifest: &mut Manifest,
    out: &Path,
    name: &str,
    grids: Vec<OccupancyGrid>,
    probs: Option<Vec<Vec<f64>>>,
    cubes: &[RadarCube],
) -> Result<()> {
    for (i, occ) in grids.iter().enumerate() {
        let idx = manifest.frames[i].index;
        let path = out.join(format!("pred_{name}_{idx:04}.json"));
        storage::write_occupancy(&path, occ, Some(cubes[i].timestamp))?;
        if let Some(p) = &probs {
            let t = RawTensor::new(occ.shape().to_vec(), TensorData::F64(p[i].clone()))?;
            storage::write_tensor(&out.join(format!("pred_{name}_{idx:04}.probability.rdlc")), &t)?;
        }
        let cloud = grid_to_point_cloud(occ, Some(&cubes[i]))?;
        write_text(&out.join(format!("pred_{name}_{idx:04}.ply")), &ply_string(&cloud)?)?;
        manifest.frames[i].files.insert(format!("pred.{name}"), path);
    }
    Ok(())
}

fn load_cubes(manifest: &Manifest) -> Result<Vec<RadarCube>> {
    (0..manifest.frames.len()).into_par_iter().map(|i| Ok(storage::read_cube(&manifest.file(i, "cube")?)?)).collect()
}

/// Detection windows are sized for the configured grid.
fn check_cube_grids(cubes: &[RadarCube], grid: &PolarGrid) -> Result<()> {
    if let Some(i) = cubes.iter().position(|c| !c.grid.same_layout(grid)) {
        let dims = |g: &PolarGrid| format!("{} x {} x {} x {}", g.n_range, g.n_doppler, g.n_az(), g.n_el());
        bail!(
            "cube {i} grid ({}, range x Doppler x azimuth x elevation) does not match the configured grid ({}); pass the matching --config",
            dims(&cubes[i].grid),
            dims(grid)
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct DetectCfarArgs {
    pub run: RunArgs,
    pub ablations: Vec<String>,
}

/// Cascaded OS-CFAR on every cube.
pub fn detect_cfar(args: &DetectCfarArgs) -> Result<Manifest> {
    let (mut manifest, mut cfg) = open_run(&args.run, &["cube"])?;
    apply_ablations(&mut cfg, &args.ablations)?;
    let flat = cfg.detector.ablations.no_elevation;
    let cubes = load_cubes(&manifest)?;
    check_cube_grids(&cubes, &Setup::from_config(&cfg)?.grid)?;
    let grids: Vec<OccupancyGrid> = cubes
        .par_iter()
        .map(|c| cascade_detect(c, &cfg.cfar.range_azimuth, &cfg.cfar.doppler, flat))
        .collect::<std::result::Result<_, _>>()?;
    write_predictions(&mut manifest, args.run.out(), "cfar", grids, None, &cubes)?;
    finish_run(&manifest, &cfg, args.run.out())?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub inputs: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub ablations: Vec<String>,
    pub out: PathBuf,
}

/// Cubes and supervision of one run on the grid the detector predicts on.
pub fn labeled_run(dir: &Path, cfg: &Config) -> Result<Vec<LabeledFrame>> {
    let manifest = Manifest::load(dir)?;
    manifest.check_pairing(&["cube", "gt"])?;
    let setup = Setup::from_config(cfg)?;
    let label_grid = cfg.detector_grid()?;
    (0..manifest.frames.len())
        .into_par_iter()
        .map(|i| {
            let cube = storage::read_cube(&manifest.file(i, "cube")?)?;
            if !cube.grid.same_layout(&setup.grid) {
                bail!("{}: cube grid differs from the configured grid", dir.display());
            }
            let (lidar, _) = storage::read_cloud(&manifest.file(i, "gt")?)?;
            let (gt_cloud, gt) = setup.supervise(&lidar, &label_grid)?;
            Ok(LabeledFrame { cube, gt_cloud, gt })
        })
        .collect()
}

/// Trains the detector on the given runs and writes a checkpoint plus a
/// JSON training log next to it.
pub fn train(args: &TrainArgs) -> Result<(DetectorModel<f32>, TrainLog)> {
    if args.inputs.is_empty() {
        bail!("train needs at least one run directory");
    }
    let mut cfg = resolve_config(args.config.as_deref(), args.inputs.first().map(PathBuf::as_path))?;
    apply_ablations(&mut cfg, &args.ablations)?;
    if let Some(s) = args.seed {
        cfg.detector.seed = s;
    }
    let windows = |dirs: &[PathBuf]| -> Result<Vec<_>> {
        let mut all = Vec::new();
        for d in dirs {
            let frames = labeled_run(d, &cfg)?;
            all.extend(training_windows::<f32>(&frames, cfg.detector.frames, &cfg.detector.ablations)?);
        }
        Ok(all)
    };
    let train_set = windows(&args.inputs)?;
    let val_set = windows(&args.validation)?;
    let mut model = DetectorModel::<f32>::new(&cfg.detector)?;
    let log = train_model(&mut model, &train_set, &val_set, cfg.detector.epochs)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_out(parent)?;
    }
    checkpoint::save(&args.out, &model)?;
    write_text(&log_path(&args.out), &(serde_json::to_string_pretty(&log)? + "\n"))?;
    Ok((model, log))
}

pub fn log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".log.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Default)]
pub struct DetectNnArgs {
    pub run: RunArgs,
    pub checkpoint: PathBuf,
    pub threshold: Option<f64>,
}

/// Learned detector on every cube of a run.
pub fn detect_nn(args: &DetectNnArgs) -> Result<Manifest> {
    let (mut manifest, cfg) = open_run(&args.run, &["cube"])?;
    let model = checkpoint::load(&args.checkpoint).with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let threshold = args.threshold.unwrap_or(model.config.prob_threshold);
    let cubes = load_cubes(&manifest)?;
    let grid = if model.config.ablations.no_elevation { cubes[0].grid.without_elevation() } else { cubes[0].grid.clone() };
    if model.config.output_bins() != grid.n_el() {
        bail!("checkpoint predicts {} elevation bins, cubes have {}", model.config.output_bins(), grid.n_el());
    }
    let probs = predict_probabilities(&model, &cubes)?;
    let grids: Vec<OccupancyGrid> =
        probs.iter().map(|p| threshold_probabilities(p, &grid, threshold)).collect::<std::result::Result<_, _>>()?;
    write_predictions(&mut manifest, args.run.out(), "nn", grids, Some(probs), &cubes)?;
    finish_run(&manifest, &cfg, args.run.out())?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub run: RunArgs,
    /// Prediction sets to score; all of them when empty.
    pub predictions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub summary: MetricsSummary,
    pub frames: Vec<FrameMetrics>,
    /// Mean over frames of the per-frame sweep, when probabilities exist.
    #[serde(default)]
    pub roc: Option<Vec<RocPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub predictions: BTreeMap<String, PredictionReport>,
}

fn prediction_names(manifest: &Manifest) -> Vec<String> {
    let mut names: Vec<String> = manifest.frames[0]
        .files
        .keys()
        .filter_map(|k| k.strip_prefix("pred.").map(str::to_string))
        .collect();
    names.sort();
    names
}

/// Mean of `Some` values, `None` when there are none.
fn mean_some(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Pd, Pfa and Chamfer distance of every prediction set against the
/// supervision, written as `metrics.json` with bird's-eye-view images.
pub fn evaluate(args: &EvaluateArgs) -> Result<MetricsReport> {
    let (manifest, cfg) = open_run(&args.run, &["gt"])?;
    let setup = Setup::from_config(&cfg)?;
    let out = args.run.out();
    let names = if args.predictions.is_empty() { prediction_names(&manifest) } else { args.predictions.clone() };
    if names.is_empty() {
        bail!("no predictions to evaluate in {}", args.run.input.display());
    }
    let lidar: Vec<_> = (0..manifest.frames.len())
        .map(|i| Ok(storage::read_cloud(&manifest.file(i, "gt")?)?.0))
        .collect::<Result<_>>()?;
    let mut report = MetricsReport { frames: manifest.frames.len(), predictions: BTreeMap::new() };
    for name in names {
        let role = format!("pred.{name}");
        let mut frames = Vec::new();
        let mut rocs: Vec<Vec<RocPoint>> = Vec::new();
        for i in 0..manifest.frames.len() {
            let pred_path = manifest.file(i, &role)?;
            let (pred, _) = storage::read_occupancy(&pred_path)?;
            let (gt_cloud, gt) = setup.supervise(&lidar[i], &label_grid_for(&setup.grid, &pred.grid)?)?;
            frames.push(frame_metrics(&pred, &gt, &gt_cloud)?);
            let prob_path = pred_path.with_extension("probability.rdlc");
            if prob_path.exists() {
                let p = storage::read_tensor(&prob_path)?;
                p.expect_shape(&pred.shape())?;
                rocs.push(roc_sweep(&p.into_f64()?, &gt, &cfg.eval.roc_thresholds)?);
            }
            let img = bird_eye_view(&pred, cfg.eval.bev_resolution).beside(&bird_eye_view(&gt, cfg.eval.bev_resolution));
            write_bytes(&out.join(format!("bev_{name}_{:04}.pgm", manifest.frames[i].index)), &img.to_pgm())?;
        }
        let roc = (rocs.len() == frames.len()).then(|| {
            (0..cfg.eval.roc_thresholds.len())
                .map(|k| RocPoint {
                    threshold: cfg.eval.roc_thresholds[k],
                    pd: mean_some(rocs.iter().map(|r| r[k].pd)),
                    pfa: mean_some(rocs.iter().map(|r| r[k].pfa)),
                    chamfer: mean_some(rocs.iter().map(|r| r[k].chamfer)),
                })
                .collect()
        });
        report.predictions.insert(name, PredictionReport { summary: summarize(&frames), frames, roc });
    }
    write_text(&out.join("metrics.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(report)
}

/// Labels live on the configured grid, collapsed when the prediction is.
fn label_grid_for(configured: &PolarGrid, pred: &PolarGrid) -> Result<PolarGrid> {
    let grid = if pred.n_el() == 1 && configured.n_el() > 1 { configured.without_elevation() } else { configured.clone() };
    if !grid.same_layout(pred) {
        bail!("prediction grid differs from the configured grid");
    }
    Ok(grid)
}

#[derive(Debug, Clone, Default)]
pub struct IngestArgs {
    /// Cube sidecars already in the tensor container format.
    pub cubes: Vec<PathBuf>,
    /// Ground-truth cloud sidecars, paired to cubes by nearest timestamp.
    pub ground_truth: Vec<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

/// Entry point for externally produced data: builds a run directory whose
/// manifest references existing cubes and ground-truth clouds, so the
/// detection and evaluation commands can run on it. Pairing is checked
/// against the configured maximum skew.
pub fn ingest(args: &IngestArgs) -> Result<Manifest> {
    if args.cubes.is_empty() {
        bail!("ingest needs at least one cube");
    }
    let cfg = resolve_config(args.config.as_deref(), None)?;
    prepare_out(&args.out)?;
    let grid = Setup::from_config(&cfg)?.grid;
    let mut cubes: Vec<(f64, PathBuf)> = args
        .cubes
        .iter()
        .map(|p| {
            let cube = storage::read_cube(p)?;
            check_cube_grids(std::slice::from_ref(&cube), &grid).with_context(|| p.display().to_string())?;
            Ok((cube.timestamp, fs::canonicalize(p)?))
        })
        .collect::<Result<_>>()?;
    cubes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gts: Vec<(f64, PathBuf)> = args
        .ground_truth
        .iter()
        .map(|p| {
            let (_, t) = storage::read_cloud(p)?;
            let t = t.with_context(|| format!("{} has no timestamp", p.display()))?;
            Ok((t, fs::canonicalize(p)?))
        })
        .collect::<Result<_>>()?;
    let mut manifest = Manifest::new(&args.out, 0, cfg.eval.max_skew);
    for (index, (t, cube)) in cubes.into_iter().enumerate() {
        let mut files: BTreeMap<String, PathBuf> = [("cube".to_string(), cube)].into();
        let nearest = gts.iter().min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()));
        let gt_timestamp = nearest.map(|(gt_t, p)| {
            files.insert("gt".into(), p.clone());
            *gt_t
        });
        manifest.frames.push(FrameRecord { index, radar_timestamp: t, gt_timestamp, files });
    }
    if !gts.is_empty() {
        manifest.check_pairing(&["cube", "gt"])?;
    }
    write_config(&args.out, &cfg)?;
    manifest.save(&args.out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Ply,
    Csv,
}

#[derive(Debug, Clone)]
pub struct ExportArgs {
    /// Occupancy or point-cloud sidecar.
    pub input: PathBuf,
    /// Cube supplying Doppler and power for occupancy exports.
    pub cube: Option<PathBuf>,
    pub format: ExportFormat,
    pub out: PathBuf,
}

pub fn export(args: &ExportArgs) -> Result<usize> {
    let cloud = match storage::artifact_kind(&args.input)? {
        ArtifactKind::Occupancy => {
            let (occ, _) = storage::read_occupancy(&args.input)?;
            let cube = args.cube.as_deref().map(storage::read_cube).transpose()?;
            grid_to_point_cloud(&occ, cube.as_ref())?
        }
        ArtifactKind::Cloud => storage::read_cloud(&args.input)?.0,
        other => bail!("cannot export a {other:?} artifact as points"),
    };
    let text = match args.format {
        ExportFormat::Ply => ply_string(&cloud)?,
        ExportFormat::Csv => csv_string(&cloud)?,
    };
    write_text(&args.out, &text)?;
    Ok(cloud.len())
}
