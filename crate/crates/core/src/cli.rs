//! The `dvf` command line: `fuse`, `eval`, `sweep` and `synth`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::augment::{
    apply_transform, drop_points, dropout_masks, gt_sample, GlobalTransform, GtSampleConfig, SampleDb, Scene,
    TransformRanges,
};
use crate::calib::{parse_calib, CameraCalib};
use crate::dataio::{
    self, camera_box_to_lidar, lidar_box_to_camera, read_labels, synthetic_sample_db, synthetic_scene, LabelRecord,
};
use crate::eval::{evaluate, Detection, EvalConfig, GroundTruth};
use crate::fusion::{correspondence_report, fuse_hierarchy, CorrespondenceStats, DEFAULT_FG_THRESHOLD};
use crate::heatmap::{inference_mask, parse_detections, training_mask, ConfidenceRange, ForegroundHeatmap};
use crate::rng::{parse_seed, RandomStream};
use crate::voxelgrid::{build_hierarchy, GridConfig};

/// Entries in the synthetic sample database used when none is given.
const DEFAULT_SAMPLE_DB_SIZE: usize = 20;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input; exit code 2.
    Input(String),
    /// Parameter outside its allowed range; exit code 3.
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Config(m) => m,
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "dvf", version, about = "Dense voxel fusion data path")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Voxelize a scene, build its foreground heatmap and fuse.
    Fuse(FuseArgs),
    /// Score KITTI-format predictions against ground truth.
    Eval(EvalArgs),
    /// Repeat `fuse` over a list of parameter values.
    Sweep(SweepArgs),
    /// Write synthetic scenes as KITTI-format files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Parameters shared by `fuse` and `sweep`. Each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// JSON file with parameter overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Level-0 voxel size: one value or `x,y,z`.
    #[arg(long, value_name = "RES")]
    pub grid_res: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub dilation: Option<u32>,
    #[arg(long)]
    pub conf_min: Option<f64>,
    #[arg(long)]
    pub conf_max: Option<f64>,
    #[arg(long)]
    pub k_samples: Option<usize>,
    #[arg(long)]
    pub p_drop: Option<f64>,
    #[arg(long)]
    pub point_drop: Option<f64>,
    #[arg(long)]
    pub fg_threshold: Option<f64>,
}

/// Where the scene comes from.
#[derive(Debug, Clone, Default, Args)]
pub struct SceneArgs {
    /// Synthetic scene `seed,n_objects`.
    #[arg(long, value_name = "SEED,N", conflicts_with = "velodyne")]
    pub synthetic: Option<String>,
    /// KITTI velodyne `.bin`.
    #[arg(long, requires = "calib")]
    pub velodyne: Option<PathBuf>,
    /// KITTI calibration file.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// KITTI label file for the velodyne scene.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Directory of ground-truth samples (`<name>.bin` + `<name>.json`).
    #[arg(long)]
    pub sample_db: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub seed: String,
    #[arg(long, value_enum, default_value = "train")]
    pub mode: Mode,
    /// 2D detections (`u1 v1 u2 v2 confidence` per line) or `none`.
    #[arg(long, default_value = "none")]
    pub dets: String,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of prediction label files (16 fields, with score).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth label files.
    #[arg(long)]
    pub gt: PathBuf,
    /// Directory of per-frame calibration files with matching names.
    #[arg(long)]
    pub calib_dir: Option<PathBuf>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepVar {
    MinConfidence,
    PDrop,
    PointDrop,
}

impl SweepVar {
    fn name(&self) -> &'static str {
        match self {
            SweepVar::MinConfidence => "min_confidence",
            SweepVar::PDrop => "p_drop",
            SweepVar::PointDrop => "point_drop",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub seed: String,
    #[arg(long, value_enum)]
    pub var: SweepVar,
    /// Comma-separated values in [0, 1].
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub values: Vec<f64>,
    #[arg(long, value_enum, default_value = "train")]
    pub mode: Mode,
    #[arg(long, default_value = "none")]
    pub dets: String,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: String,
    /// Cars per scene.
    #[arg(long, default_value_t = 3)]
    pub objects: usize,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// Also write a ground-truth sample database with this many entries.
    #[arg(long)]
    pub sample_db: Option<usize>,
    /// Output root; gets `velodyne/`, `calib/` and `label_2/`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parameter file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub range_min: Option<[f64; 3]>,
    pub range_max: Option<[f64; 3]>,
    pub grid_res: Option<[f64; 3]>,
    pub levels: Option<usize>,
    pub dilation: Option<u32>,
    pub conf_min: Option<f64>,
    pub conf_max: Option<f64>,
    pub k_samples: Option<usize>,
    pub p_drop: Option<f64>,
    pub point_drop: Option<f64>,
    pub fg_threshold: Option<f64>,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub conf_min: f64,
    pub conf_max: f64,
    pub k_samples: usize,
    pub p_drop: f64,
    pub point_drop: f64,
    pub fg_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = ConfidenceRange::default();
        Self {
            grid: GridConfig::default(),
            conf_min: c.a,
            conf_max: c.b,
            k_samples: 5,
            p_drop: 0.5,
            point_drop: 0.0,
            fg_threshold: DEFAULT_FG_THRESHOLD,
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} {v} outside [0, 1]")))
    }
}

impl RunConfig {
    /// Defaults, then the config file, then command-line flags.
    pub fn resolve(params: &ParamArgs) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &params.config {
            let text = dataio::read_text(path).map_err(|e| CliError::Input(e.to_string()))?;
            let file: ConfigFile = serde_json::from_str(&text).map_err(|e| input_err(path, e))?;
            cfg.merge_file(&file);
        }
        if let Some(res) = &params.grid_res {
            cfg.grid.resolution = parse_res(res)?;
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),*) => {
                $(if let Some(v) = params.$src { cfg.$($dst).+ = v; })*
            };
        }
        set!(levels => grid.num_levels, dilation => grid.dilation_radius, conf_min => conf_min,
             conf_max => conf_max, k_samples => k_samples, p_drop => p_drop,
             point_drop => point_drop, fg_threshold => fg_threshold);
        cfg.validate()?;
        Ok(cfg)
    }

    fn merge_file(&mut self, f: &ConfigFile) {
        if let Some(v) = f.range_min {
            self.grid.range_min = v;
        }
        if let Some(v) = f.range_max {
            self.grid.range_max = v;
        }
        if let Some(v) = f.grid_res {
            self.grid.resolution = v;
        }
        if let Some(v) = f.levels {
            self.grid.num_levels = v;
        }
        if let Some(v) = f.dilation {
            self.grid.dilation_radius = v;
        }
        if let Some(v) = f.conf_min {
            self.conf_min = v;
        }
        if let Some(v) = f.conf_max {
            self.conf_max = v;
        }
        if let Some(v) = f.k_samples {
            self.k_samples = v;
        }
        if let Some(v) = f.p_drop {
            self.p_drop = v;
        }
        if let Some(v) = f.point_drop {
            self.point_drop = v;
        }
        if let Some(v) = f.fg_threshold {
            self.fg_threshold = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grid.validate().map_err(config_err)?;
        self.confidence_range()?;
        check_fraction("p_drop", self.p_drop)?;
        check_fraction("point_drop", self.point_drop)?;
        check_fraction("fg_threshold", self.fg_threshold)
    }

    pub fn confidence_range(&self) -> Result<ConfidenceRange, CliError> {
        ConfidenceRange::new(self.conf_min, self.conf_max).map_err(config_err)
    }
}

fn parse_res(text: &str) -> Result<[f64; 3], CliError> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Input(format!("--grid-res {text:?} is not a number list")))?;
    match vals.as_slice() {
        [r] => Ok([*r; 3]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(CliError::Config(format!("--grid-res takes 1 or 3 values, got {}", vals.len()))),
    }
}

fn seed_arg(text: &str) -> Result<u64, CliError> {
    parse_seed(text).map_err(|e| CliError::Input(format!("--seed: {e}")))
}

fn parse_synthetic(text: &str) -> Result<(u64, usize), CliError> {
    let bad = || CliError::Input(format!("--synthetic expects SEED,N, got {text:?}"));
    let (s, n) = text.split_once(',').ok_or_else(bad)?;
    let seed = parse_seed(s.trim()).map_err(|_| bad())?;
    let n = n.trim().parse().map_err(|_| bad())?;
    Ok((seed, n))
}

/// Lidar-frame boxes and classes of the non-DontCare labels.
fn labels_to_boxes(
    recs: &[LabelRecord],
    calib: &CameraCalib,
    path: &Path,
) -> Result<(Vec<crate::geometry::Box3D>, Vec<String>), CliError> {
    let mut boxes = Vec::new();
    let mut classes = Vec::new();
    for r in recs.iter().filter(|r| !r.is_dont_care()) {
        boxes.push(camera_box_to_lidar(r, calib).map_err(|e| input_err(path, e))?);
        classes.push(r.class.clone());
    }
    Ok((boxes, classes))
}

fn load_scene(args: &SceneArgs, grid: &GridConfig) -> Result<Scene, CliError> {
    let calib = match &args.calib {
        Some(path) => {
            let text = dataio::read_text(path).map_err(|e| CliError::Input(e.to_string()))?;
            parse_calib(&text).map_err(|e| input_err(path, e))?
        }
        None => CameraCalib::kitti_reference(),
    };
    if let Some(text) = &args.synthetic {
        let (seed, n) = parse_synthetic(text)?;
        return Ok(synthetic_scene(seed, n, grid, &calib));
    }
    let Some(vpath) = &args.velodyne else {
        return Err(CliError::Config("need --synthetic or --velodyne".into()));
    };
    let bytes = dataio::read_file(vpath).map_err(|e| CliError::Input(e.to_string()))?;
    let points = dataio::read_velodyne(&bytes).map_err(|e| input_err(vpath, e))?;
    let (boxes, classes) = match &args.labels {
        Some(lpath) => {
            let text = dataio::read_text(lpath).map_err(|e| CliError::Input(e.to_string()))?;
            let recs = read_labels(&text).map_err(|e| input_err(lpath, e))?;
            labels_to_boxes(&recs, &calib, lpath)?
        }
        None => (Vec::new(), Vec::new()),
    };
    Ok(Scene::new(points, boxes, classes, calib))
}

/// Summary written to `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuseSummary {
    pub mode: Mode,
    pub seed: u64,
    pub config: RunConfig,
    pub points: usize,
    pub boxes: usize,
    pub inserted: usize,
    /// Inserted boxes left out of the mask.
    pub hidden: usize,
    pub transform: Option<GlobalTransform>,
    pub occupied: Vec<usize>,
    pub correspondences: CorrespondenceStats,
}

/// Everything `fuse` produces, before it is written out.
#[derive(Debug, Clone)]
pub struct FuseOutput {
    pub heatmap: ForegroundHeatmap,
    pub summary: FuseSummary,
    pub fused: Vec<crate::fusion::FusedLevel>,
    pub hierarchy: crate::voxelgrid::VoxelHierarchy,
}

/// Run the fusion data path without touching the output directory.
pub fn run_fuse(
    seed: u64,
    mode: Mode,
    dets: &str,
    scene_args: &SceneArgs,
    cfg: &RunConfig,
) -> Result<FuseOutput, CliError> {
    let scene = load_scene(scene_args, &cfg.grid)?;
    let root = RandomStream::new(seed);
    let (w, h) = (scene.calib.image_width(), scene.calib.image_height());

    let (scene, inserted, heatmap_for) = match mode {
        Mode::Train => {
            let db = match &scene_args.sample_db {
                Some(dir) => SampleDb::load(dir).map_err(|e| input_err(dir, e))?,
                None => synthetic_sample_db(seed, DEFAULT_SAMPLE_DB_SIZE, &cfg.grid),
            };
            let mut sample_cfg = GtSampleConfig::from_grid(&cfg.grid);
            sample_cfg.require_in_image = true;
            let (scene, report) = gt_sample(&scene, &db, cfg.k_samples, &sample_cfg, &mut root.split("gt-sample"))
                .map_err(config_err)?;
            let mut scene = dropout_masks(&scene, &report.inserted_indices, cfg.p_drop, &mut root.split("dropout"))
                .map_err(config_err)?;
            scene.points =
                drop_points(&scene.points, cfg.point_drop, &mut root.split("point-drop")).map_err(config_err)?;
            let t = GlobalTransform::random(&TransformRanges::default(), &mut root.split("transform"))
                .map_err(config_err)?;
            let scene = apply_transform(&scene, &t).map_err(config_err)?;
            let map = training_mask(
                &scene.calib,
                &scene.boxes_in_sensor_frame(),
                &scene.mask_visible,
                &cfg.confidence_range()?,
                &mut root.split("confidence"),
            )
            .map_err(config_err)?;
            (scene, report.inserted_indices.len(), map)
        }
        Mode::Infer => {
            let mut scene = scene;
            scene.points =
                drop_points(&scene.points, cfg.point_drop, &mut root.split("point-drop")).map_err(config_err)?;
            let map = if dets == "none" {
                ForegroundHeatmap::zeros(w, h).map_err(config_err)?
            } else {
                let path = Path::new(dets);
                let text = dataio::read_text(path).map_err(|e| CliError::Input(e.to_string()))?;
                let boxes = parse_detections(&text).map_err(|e| input_err(path, e))?;
                inference_mask(&boxes, w, h).map_err(|e| input_err(path, e))?
            };
            (scene, 0, map)
        }
    };

    let hierarchy = build_hierarchy(&scene.points, &cfg.grid).map_err(config_err)?;
    let fused = fuse_hierarchy(&hierarchy, &scene.calib, &heatmap_for, scene.applied_transform.as_ref())
        .map_err(config_err)?;
    let correspondences = correspondence_report(&fused, cfg.fg_threshold).map_err(config_err)?;
    let hidden = scene
        .inserted_indices()
        .iter()
        .filter(|&&i| !scene.mask_visible[i])
        .count();
    let summary = FuseSummary {
        mode,
        seed,
        config: cfg.clone(),
        points: scene.points.len(),
        boxes: scene.gt_boxes.len(),
        inserted,
        hidden,
        transform: scene.applied_transform,
        occupied: hierarchy.occupied_counts(),
        correspondences,
    };
    Ok(FuseOutput {
        heatmap: heatmap_for,
        summary,
        fused,
        hierarchy,
    })
}

fn write_fuse_outputs(out: &Path, result: &FuseOutput) -> Result<(), CliError> {
    let io = |e: dataio::DataIoError| CliError::Input(e.to_string());
    dataio::write_heatmap(&out.join("heatmap"), &result.heatmap).map_err(io)?;
    dataio::write_overlay_csv(&out.join("overlay.csv"), &result.summary.correspondences.records).map_err(io)?;
    let mut json = serde_json::to_string_pretty(&result.summary).expect("summary serializes");
    json.push('\n');
    dataio::write_file(&out.join("stats.json"), json).map_err(io)
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<FuseOutput, CliError> {
    let seed = seed_arg(&args.seed)?;
    let cfg = RunConfig::resolve(&args.params)?;
    let result = run_fuse(seed, args.mode, &args.dets, &args.scene, &cfg)?;
    write_fuse_outputs(&args.out, &result)?;
    Ok(result)
}

pub const SWEEP_HEADER: &str = "variable,value,points,boxes,inserted,hidden,occupied,in_image,foreground,background";

pub fn sweep_row(var: &str, value: f64, s: &FuseSummary) -> String {
    let t = &s.correspondences.total;
    format!(
        "{var},{value},{},{},{},{},{},{},{},{}",
        s.points, s.boxes, s.inserted, s.hidden, t.occupied, t.in_image, t.foreground, t.background
    )
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<FuseSummary>, CliError> {
    let seed = seed_arg(&args.seed)?;
    let base = RunConfig::resolve(&args.params)?;
    for &v in &args.values {
        check_fraction(args.var.name(), v)?;
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    let mut out = Vec::with_capacity(args.values.len());
    for &v in &args.values {
        let mut cfg = base.clone();
        match args.var {
            SweepVar::MinConfidence => cfg.conf_min = v,
            SweepVar::PDrop => cfg.p_drop = v,
            SweepVar::PointDrop => cfg.point_drop = v,
        }
        cfg.validate()?;
        let result = run_fuse(seed, args.mode, &args.dets, &args.scene, &cfg)?;
        csv.push_str(&sweep_row(args.var.name(), v, &result.summary));
        csv.push('\n');
        out.push(result.summary);
    }
    dataio::write_file(&args.out, csv).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(out)
}

fn label_stems(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| input_err(dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| input_err(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_string());
            }
        }
    }
    Ok(stems)
}

fn read_label_file(path: &Path) -> Result<Vec<LabelRecord>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = dataio::read_text(path).map_err(|e| CliError::Input(e.to_string()))?;
    read_labels(&text).map_err(|e| input_err(path, e))
}

/// Calibration used when none is given: the plain KITTI axis permutation.
/// IoU does not depend on the rigid camera-to-LiDAR motion, so any proper
/// rigid chain gives the same scores.
fn eval_default_calib() -> CameraCalib {
    CameraCalib::forward_pinhole(721.5377, 609.5593, 172.854, 1242, 375)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<serde_json::Value, CliError> {
    let mut stems = label_stems(&args.gt)?;
    stems.extend(label_stems(&args.pred)?);
    let config = EvalConfig::default();
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    let default_calib = eval_default_calib();
    for (frame, stem) in stems.iter().enumerate() {
        let calib = match &args.calib_dir {
            Some(dir) => {
                let path = dir.join(format!("{stem}.txt"));
                let text = dataio::read_text(&path).map_err(|e| CliError::Input(e.to_string()))?;
                parse_calib(&text).map_err(|e| input_err(&path, e))?
            }
            None => default_calib.clone(),
        };
        let gpath = args.gt.join(format!("{stem}.txt"));
        for r in read_label_file(&gpath)?.iter().filter(|r| config.iou_thresholds.contains_key(&r.class)) {
            gts.push(GroundTruth {
                frame,
                box3d: camera_box_to_lidar(r, &calib).map_err(|e| input_err(&gpath, e))?,
                class: r.class.clone(),
            });
        }
        let ppath = args.pred.join(format!("{stem}.txt"));
        for r in read_label_file(&ppath)?.iter().filter(|r| config.iou_thresholds.contains_key(&r.class)) {
            let score = r
                .score
                .ok_or_else(|| CliError::Input(format!("{}: prediction without score", ppath.display())))?;
            dets.push(Detection {
                frame,
                box3d: camera_box_to_lidar(r, &calib).map_err(|e| input_err(&ppath, e))?,
                score,
                class: r.class.clone(),
            });
        }
    }
    let report = evaluate(&dets, &gts, &config).map_err(|e| CliError::Input(e.to_string()))?;
    let value = serde_json::json!({
        "frames": stems.len(),
        "recall_positions": config.recall_positions,
        "classes": report,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    if let Some(out) = &args.out {
        dataio::write_file(out, text).map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(value)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let seed = seed_arg(&args.seed)?;
    let grid = GridConfig::default();
    let calib = CameraCalib::kitti_reference();
    let io = |e: dataio::DataIoError| CliError::Input(e.to_string());
    let root = RandomStream::new(seed);
    for frame in 0..args.frames {
        let frame_seed = root.split(format!("frame/{frame}")).seed();
        let scene = synthetic_scene(frame_seed, args.objects, &grid, &calib);
        let stem = format!("{frame:06}");
        dataio::write_file(
            &args.out.join("velodyne").join(format!("{stem}.bin")),
            dataio::write_velodyne(&scene.points),
        )
        .map_err(io)?;
        dataio::write_file(&args.out.join("calib").join(format!("{stem}.txt")), calib.to_kitti_text()).map_err(io)?;
        let mut labels = String::new();
        for (b, class) in scene.gt_boxes.iter().zip(&scene.classes) {
            labels.push_str(&lidar_box_to_camera(b, class, &calib, None).map_err(io)?.to_line());
            labels.push('\n');
        }
        dataio::write_file(&args.out.join("label_2").join(format!("{stem}.txt")), labels).map_err(io)?;
    }
    if let Some(n) = args.sample_db {
        synthetic_sample_db(seed, n, &grid)
            .save(&args.out.join("sample_db"))
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Fuse(a) => cmd_fuse(a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(a).map(|_| ()),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => {
            let report = cmd_eval(a)?;
            if a.out.is_none() {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                writeln!(stdout, "{text}").map_err(|e| CliError::Input(format!("stdout: {e}")))?;
            }
            Ok(())
        }
    }
}

/// Parse `args` and run. Failures print one line to `stderr` and return the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let line: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            let _ = writeln!(stderr, "{}", line.join(" "));
            return 2;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message().replace('\n', " "));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ParamArgs {
        ParamArgs::default()
    }

    #[test]
    fn defaults_carry_stated_constants() {
        let cfg = RunConfig::resolve(&params()).unwrap();
        assert_eq!((cfg.conf_min, cfg.conf_max), (0.8, 1.0));
        assert_eq!(cfg.k_samples, 5);
        assert_eq!(cfg.p_drop, 0.5);
        assert_eq!(cfg.grid.num_levels, 4);
        assert_eq!(cfg.grid.dilation_radius, 1);
        assert_eq!(cfg.fg_threshold, 0.9);
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"p_drop": 0.25, "k_samples": 2, "grid_res": [0.1, 0.1, 0.2]}"#).unwrap();
        let mut p = params();
        p.config = Some(path.clone());
        p.p_drop = Some(0.75);
        let cfg = RunConfig::resolve(&p).unwrap();
        assert_eq!(cfg.p_drop, 0.75);
        assert_eq!(cfg.k_samples, 2);
        assert_eq!(cfg.grid.resolution, [0.1, 0.1, 0.2]);
        assert_eq!(cfg.conf_min, 0.8);

        std::fs::write(&path, r#"{"p_dorp": 0.25}"#).unwrap();
        assert!(matches!(RunConfig::resolve(&p), Err(CliError::Input(_))));
    }

    #[test]
    fn config_violations() {
        let mut p = params();
        p.conf_min = Some(0.9);
        p.conf_max = Some(0.5);
        assert!(matches!(RunConfig::resolve(&p), Err(CliError::Config(_))));
        let mut p = params();
        p.levels = Some(0);
        assert!(matches!(RunConfig::resolve(&p), Err(CliError::Config(_))));
        let mut p = params();
        p.grid_res = Some("0.1,0.2".into());
        assert!(matches!(RunConfig::resolve(&p), Err(CliError::Config(_))));
        assert_eq!(parse_res("0.2").unwrap(), [0.2; 3]);
    }

    #[test]
    fn synthetic_arg_parsing() {
        assert_eq!(parse_synthetic("7,3").unwrap(), (7, 3));
        assert_eq!(parse_synthetic("0x10, 2").unwrap(), (16, 2));
        assert!(parse_synthetic("7").is_err());
    }
}
