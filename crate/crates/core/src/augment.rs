//! Training-time augmentation: reversible global transforms, ground-truth
//! sampling, mask dropout and point dropping.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::CameraCalib;
use crate::eval::bev_iou;
use crate::geometry::{Box3D, LidarPoint, PointCloud};
use crate::rng::RandomStream;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("scene already carries a global transform")]
    AlreadyTransformed,
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("box index {index} out of range ({len} boxes)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("box {0} was not inserted by ground-truth sampling")]
    NotInserted(usize),
    #[error("fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("sample database: {0}")]
    SampleDb(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Global scene transform, applied as flip ∘ rotate ∘ scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalTransform {
    pub scale: f64,
    /// Rotation about +Z, radians.
    pub yaw: f64,
    /// Mirror across the X axis (`y -> -y`).
    pub flip_x: bool,
}

impl Default for GlobalTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Sampling ranges for random global transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRanges {
    pub scale: (f64, f64),
    pub yaw: (f64, f64),
    pub flip_probability: f64,
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            scale: (0.95, 1.05),
            yaw: (-FRAC_PI_4, FRAC_PI_4),
            flip_probability: 0.5,
        }
    }
}

impl GlobalTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            yaw: 0.0,
            flip_x: false,
        }
    }

    pub fn new(scale: f64, yaw: f64, flip_x: bool) -> Result<Self, AugmentError> {
        let t = Self { scale, yaw, flip_x };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(AugmentError::InvalidTransform(format!("scale {}", self.scale)));
        }
        if !self.yaw.is_finite() {
            return Err(AugmentError::InvalidTransform(format!("yaw {}", self.yaw)));
        }
        Ok(())
    }

    pub fn random(ranges: &TransformRanges, rng: &mut RandomStream) -> Result<Self, AugmentError> {
        let bad = |e: crate::rng::RngError| AugmentError::InvalidTransform(e.to_string());
        let scale = rng.uniform(ranges.scale.0, ranges.scale.1).map_err(bad)?;
        let yaw = rng.uniform(ranges.yaw.0, ranges.yaw.1).map_err(bad)?;
        let flip_x = rng.bernoulli(ranges.flip_probability);
        Self::new(scale, yaw, flip_x)
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.yaw == 0.0 && !self.flip_x
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let (x, y, z) = (p.x * self.scale, p.y * self.scale, p.z * self.scale);
        let (x, y) = (c * x - s * y, s * x + c * y);
        let y = if self.flip_x { -y } else { y };
        Point3::new(x, y, z)
    }

    pub fn invert_point(&self, p: &Point3<f64>) -> Point3<f64> {
        let y = if self.flip_x { -p.y } else { p.y };
        let (s, c) = self.yaw.sin_cos();
        let (x, y) = (c * p.x + s * y, -s * p.x + c * y);
        Point3::new(x / self.scale, y / self.scale, p.z / self.scale)
    }

    pub fn apply_box(&self, b: &Box3D) -> Box3D {
        let yaw = b.yaw + self.yaw;
        Box3D {
            center: self.apply_point(&b.center),
            size: b.size * self.scale,
            yaw: if self.flip_x { -yaw } else { yaw },
        }
    }

    pub fn invert_box(&self, b: &Box3D) -> Box3D {
        let yaw = if self.flip_x { -b.yaw } else { b.yaw };
        Box3D {
            center: self.invert_point(&b.center),
            size: b.size / self.scale,
            yaw: yaw - self.yaw,
        }
    }
}

pub fn invert_points(t: &GlobalTransform, pts: &[Point3<f64>]) -> Vec<Point3<f64>> {
    pts.iter().map(|p| t.invert_point(p)).collect()
}

/// One training scene as it moves through augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: PointCloud,
    pub gt_boxes: Vec<Box3D>,
    pub classes: Vec<String>,
    /// Whether each box is drawn into the training mask.
    pub mask_visible: Vec<bool>,
    /// Whether each box was inserted by ground-truth sampling.
    pub inserted: Vec<bool>,
    pub calib: CameraCalib,
    pub applied_transform: Option<GlobalTransform>,
}

impl Scene {
    pub fn new(points: PointCloud, gt_boxes: Vec<Box3D>, classes: Vec<String>, calib: CameraCalib) -> Self {
        let n = gt_boxes.len();
        assert_eq!(classes.len(), n, "one class per box");
        Self {
            points,
            gt_boxes,
            classes,
            mask_visible: vec![true; n],
            inserted: vec![false; n],
            calib,
            applied_transform: None,
        }
    }

    pub fn inserted_indices(&self) -> Vec<usize> {
        (0..self.gt_boxes.len()).filter(|&i| self.inserted[i]).collect()
    }

    /// Boxes in the sensor frame the calibration refers to, undoing any
    /// applied global transform.
    pub fn boxes_in_sensor_frame(&self) -> Vec<Box3D> {
        match &self.applied_transform {
            Some(t) => self.gt_boxes.iter().map(|b| t.invert_box(b)).collect(),
            None => self.gt_boxes.clone(),
        }
    }
}

fn map_point(p: &LidarPoint, f: impl Fn(&Point3<f64>) -> Point3<f64>) -> LidarPoint {
    let q = f(&p.position());
    LidarPoint::new(q.x as f32, q.y as f32, q.z as f32, p.intensity)
}

pub fn apply_transform(scene: &Scene, t: &GlobalTransform) -> Result<Scene, AugmentError> {
    if scene.applied_transform.is_some() {
        return Err(AugmentError::AlreadyTransformed);
    }
    t.validate()?;
    let mut out = scene.clone();
    out.points = scene.points.iter().map(|p| map_point(p, |q| t.apply_point(q))).collect();
    out.gt_boxes = scene.gt_boxes.iter().map(|b| t.apply_box(b)).collect();
    out.applied_transform = Some(*t);
    Ok(out)
}

/// A stored object: points in the box frame (origin at the box center, +X along
/// the heading) plus the box it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub points: PointCloud,
    /// Size and mounting height (`center.z`) of the object; its `x`, `y` and
    /// `yaw` are ignored on insertion.
    pub template: Box3D,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleDb {
    pub entries: Vec<SampleEntry>,
}

#[derive(Serialize, Deserialize)]
struct SampleSidecar {
    #[serde(rename = "box")]
    template: Box3D,
    class: String,
}

impl SampleDb {
    pub fn new(entries: Vec<SampleEntry>) -> Result<Self, AugmentError> {
        for (i, e) in entries.iter().enumerate() {
            if !e.template.has_positive_dims() {
                return Err(AugmentError::SampleDb(format!("entry {i}: non-positive box size")));
            }
            let local = Box3D::new(Point3::origin(), e.template.size, 0.0);
            let tol = 1e-4;
            let grown = Box3D::new(Point3::origin(), e.template.size + Vector3::repeat(tol), 0.0);
            if let Some(p) = e.points.iter().find(|p| !grown.contains(&p.position())) {
                return Err(AugmentError::SampleDb(format!(
                    "entry {i}: point {:?} outside its box {:?}",
                    p,
                    local.size
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Load `<name>.bin` (velodyne layout) plus `<name>.json` pairs from `dir`,
    /// in file-name order.
    pub fn load(dir: &Path) -> Result<Self, AugmentError> {
        let io = |path: &Path, source| AugmentError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut sidecars: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        sidecars.sort();
        let mut entries = Vec::with_capacity(sidecars.len());
        for json in sidecars {
            let text = std::fs::read_to_string(&json).map_err(|e| io(&json, e))?;
            let meta: SampleSidecar = serde_json::from_str(&text)
                .map_err(|e| AugmentError::SampleDb(format!("{}: {e}", json.display())))?;
            let bin = json.with_extension("bin");
            let bytes = std::fs::read(&bin).map_err(|e| io(&bin, e))?;
            let points = crate::dataio::read_velodyne(&bytes)
                .map_err(|e| AugmentError::SampleDb(format!("{}: {e}", bin.display())))?;
            entries.push(SampleEntry {
                points,
                template: meta.template,
                class: meta.class,
            });
        }
        Self::new(entries)
    }

    pub fn save(&self, dir: &Path) -> Result<(), AugmentError> {
        let io = |path: &Path, source| AugmentError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (i, e) in self.entries.iter().enumerate() {
            let stem = dir.join(format!("{i:06}_{}", e.class));
            let bin = stem.with_extension("bin");
            std::fs::write(&bin, crate::dataio::write_velodyne(&e.points)).map_err(|err| io(&bin, err))?;
            let json = stem.with_extension("json");
            let meta = SampleSidecar {
                template: e.template,
                class: e.class.clone(),
            };
            let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
            std::fs::write(&json, text).map_err(|err| io(&json, err))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtSampleConfig {
    /// Placement range of box centers along X and Y.
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Attempts before giving up; `None` means ten per requested sample.
    pub max_attempts: Option<usize>,
    /// Only accept placements whose box projects into the camera image.
    pub require_in_image: bool,
}

impl GtSampleConfig {
    pub fn from_grid(grid: &crate::voxelgrid::GridConfig) -> Self {
        Self {
            x_range: (grid.range_min[0], grid.range_max[0]),
            y_range: (grid.range_min[1], grid.range_max[1]),
            max_attempts: None,
            require_in_image: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GtSampleReport {
    pub requested: usize,
    pub attempts: usize,
    /// Box indices (in the returned scene) of the accepted samples.
    pub inserted_indices: Vec<usize>,
}

/// Paste up to `k` database objects into the scene at random ground positions,
/// rejecting any whose ground footprint overlaps an existing box.
pub fn gt_sample(
    scene: &Scene,
    db: &SampleDb,
    k: usize,
    config: &GtSampleConfig,
    rng: &mut RandomStream,
) -> Result<(Scene, GtSampleReport), AugmentError> {
    let mut out = scene.clone();
    let mut report = GtSampleReport {
        requested: k,
        ..Default::default()
    };
    if k == 0 || db.entries.is_empty() {
        return Ok((out, report));
    }
    let max_attempts = config.max_attempts.unwrap_or(10 * k);
    let bad_range = |e: crate::rng::RngError| AugmentError::InvalidTransform(e.to_string());

    while report.inserted_indices.len() < k && report.attempts < max_attempts {
        report.attempts += 1;
        let entry = &db.entries[rng.index(db.entries.len())];
        let x = rng.uniform(config.x_range.0, config.x_range.1).map_err(bad_range)?;
        let y = rng.uniform(config.y_range.0, config.y_range.1).map_err(bad_range)?;
        let yaw = rng.uniform(-PI, PI).map_err(bad_range)?;
        let candidate = Box3D::new(Point3::new(x, y, entry.template.center.z), entry.template.size, yaw);

        let collides = out.gt_boxes.iter().any(|b| {
            // degenerate existing boxes cannot overlap anything
            bev_iou(&candidate, b).map(|iou| iou > 0.0).unwrap_or(false)
        });
        if collides {
            continue;
        }
        if config.require_in_image {
            let in_image = out
                .calib
                .project_box3d_to_aabb2d(&candidate)
                .ok()
                .flatten()
                .is_some();
            if !in_image {
                continue;
            }
        }

        out.points.extend(
            entry
                .points
                .iter()
                .map(|p| map_point(p, |q| candidate.local_to_world(q))),
        );
        report.inserted_indices.push(out.gt_boxes.len());
        out.gt_boxes.push(candidate);
        out.classes.push(entry.class.clone());
        out.mask_visible.push(true);
        out.inserted.push(true);
    }
    Ok((out, report))
}

/// Hide each listed inserted box from the mask with probability `p_drop`.
pub fn dropout_masks(
    scene: &Scene,
    inserted_indices: &[usize],
    p_drop: f64,
    rng: &mut RandomStream,
) -> Result<Scene, AugmentError> {
    if !(0.0..=1.0).contains(&p_drop) {
        return Err(AugmentError::InvalidFraction(p_drop));
    }
    let len = scene.gt_boxes.len();
    for &index in inserted_indices {
        if index >= len {
            return Err(AugmentError::IndexOutOfRange { index, len });
        }
        if !scene.inserted[index] {
            return Err(AugmentError::NotInserted(index));
        }
    }
    let mut out = scene.clone();
    for &index in inserted_indices {
        if rng.bernoulli(p_drop) {
            out.mask_visible[index] = false;
        }
    }
    Ok(out)
}

/// Remove each point independently with probability `fraction`.
pub fn drop_points(
    points: &[LidarPoint],
    fraction: f64,
    rng: &mut RandomStream,
) -> Result<PointCloud, AugmentError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(AugmentError::InvalidFraction(fraction));
    }
    Ok(points
        .iter()
        .filter(|_| !rng.bernoulli(fraction))
        .copied()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn calib() -> CameraCalib {
        CameraCalib::forward_pinhole(500.0, 400.0, 150.0, 800, 300)
    }

    fn car_entry() -> SampleEntry {
        let points = (0..50)
            .map(|i| {
                let t = i as f32 / 49.0;
                LidarPoint::new(-2.0 + 4.0 * t, 0.9 - 1.8 * t, -0.7 + 1.4 * t, 0.3)
            })
            .collect();
        SampleEntry {
            points,
            template: Box3D::new(Point3::new(0.0, 0.0, 0.0), Vector3::new(4.2, 1.9, 1.5), 0.0),
            class: "Car".into(),
        }
    }

    fn empty_scene() -> Scene {
        Scene::new(Vec::new(), Vec::new(), Vec::new(), calib())
    }

    #[test]
    fn identity_transform_changes_nothing() {
        let mut s = empty_scene();
        s.points.push(LidarPoint::new(1.5, -2.25, 0.5, 0.1));
        s.gt_boxes.push(Box3D::new(Point3::new(5.0, 1.0, 0.0), Vector3::new(4.0, 2.0, 1.5), 0.3));
        s.classes.push("Car".into());
        s.mask_visible.push(true);
        s.inserted.push(false);
        let t = apply_transform(&s, &GlobalTransform::identity()).unwrap();
        assert_eq!(t.points, s.points);
        assert_eq!(t.gt_boxes, s.gt_boxes);
        assert!(matches!(
            apply_transform(&t, &GlobalTransform::identity()),
            Err(AugmentError::AlreadyTransformed)
        ));
    }

    #[test]
    fn flip_mirrors_y_and_yaw() {
        let t = GlobalTransform::new(1.0, 0.0, true).unwrap();
        assert_eq!(t.apply_point(&Point3::new(5.0, 2.0, 1.0)), Point3::new(5.0, -2.0, 1.0));
        let b = Box3D::new(Point3::new(5.0, 2.0, 1.0), Vector3::new(4.0, 2.0, 1.5), 0.4);
        assert_eq!(t.apply_box(&b).yaw, -0.4);
    }

    #[test]
    fn rotate_then_scale() {
        let t = GlobalTransform::new(1.05, FRAC_PI_2, false).unwrap();
        let p = t.apply_point(&Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Point3::new(0.0, 1.05, 0.0), epsilon = 1e-15);
        let b = t.apply_box(&Box3D::new(Point3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 1.0, 1.0), 0.1));
        assert_relative_eq!(b.yaw, 0.1 + FRAC_PI_2);
        assert_relative_eq!(b.size, Vector3::new(2.1, 1.05, 1.05), epsilon = 1e-15);
    }

    #[test]
    fn inverse_of_composite() {
        let t = GlobalTransform::new(2.0, PI, true).unwrap();
        let p = Point3::new(3.0, 4.0, 5.0);
        let q = t.invert_point(&t.apply_point(&p));
        assert_relative_eq!(q, p, max_relative = 1e-12);
        assert_eq!(invert_points(&GlobalTransform::identity(), &[p]), vec![p]);
    }

    #[test]
    fn box_inverse_round_trip() {
        let t = GlobalTransform::new(0.97, -0.6, true).unwrap();
        let b = Box3D::new(Point3::new(12.0, -3.0, 0.2), Vector3::new(4.0, 1.8, 1.5), 1.1);
        let r = t.invert_box(&t.apply_box(&b));
        assert_relative_eq!(r.center, b.center, epsilon = 1e-12);
        assert_relative_eq!(r.size, b.size, epsilon = 1e-12);
        assert_relative_eq!(r.yaw, b.yaw, epsilon = 1e-12);
    }

    #[test]
    fn invalid_transforms() {
        assert!(GlobalTransform::new(0.0, 0.0, false).is_err());
        assert!(GlobalTransform::new(1.0, f64::INFINITY, false).is_err());
    }

    #[test]
    fn zero_samples_changes_nothing() {
        let db = SampleDb::new(vec![car_entry()]).unwrap();
        let s = empty_scene();
        let cfg = GtSampleConfig::from_grid(&Default::default());
        let (out, report) = gt_sample(&s, &db, 0, &cfg, &mut RandomStream::new(1)).unwrap();
        assert_eq!(out, s);
        assert!(report.inserted_indices.is_empty());
    }

    #[test]
    fn single_sample_into_empty_scene() {
        let db = SampleDb::new(vec![car_entry()]).unwrap();
        let cfg = GtSampleConfig::from_grid(&Default::default());
        let (out, report) = gt_sample(&empty_scene(), &db, 1, &cfg, &mut RandomStream::new(3)).unwrap();
        assert_eq!(out.gt_boxes.len(), 1);
        assert_eq!(report.inserted_indices, vec![0]);
        assert_eq!(out.points.len(), 50);
        assert!(out.points.iter().all(|p| {
            let grown = Box3D::new(out.gt_boxes[0].center, out.gt_boxes[0].size * 1.001, out.gt_boxes[0].yaw);
            grown.contains(&p.position())
        }));
        assert_eq!(out.mask_visible, vec![true]);
        assert_eq!(out.inserted, vec![true]);
    }

    #[test]
    fn samples_never_collide() {
        let db = SampleDb::new(vec![car_entry()]).unwrap();
        let cfg = GtSampleConfig {
            x_range: (0.0, 15.0),
            y_range: (-6.0, 6.0),
            max_attempts: Some(200),
            require_in_image: false,
        };
        let (out, report) = gt_sample(&empty_scene(), &db, 12, &cfg, &mut RandomStream::new(9)).unwrap();
        assert!(report.attempts <= 200);
        for i in 0..out.gt_boxes.len() {
            for j in i + 1..out.gt_boxes.len() {
                assert_eq!(bev_iou(&out.gt_boxes[i], &out.gt_boxes[j]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn in_image_placement_projects() {
        let db = SampleDb::new(vec![car_entry()]).unwrap();
        let mut cfg = GtSampleConfig::from_grid(&Default::default());
        cfg.require_in_image = true;
        let (out, _) = gt_sample(&empty_scene(), &db, 5, &cfg, &mut RandomStream::new(5)).unwrap();
        assert!(!out.gt_boxes.is_empty());
        for b in &out.gt_boxes {
            assert!(out.calib.project_box3d_to_aabb2d(b).unwrap().is_some());
        }
    }

    #[test]
    fn db_rejects_points_outside_box() {
        let mut e = car_entry();
        e.points.push(LidarPoint::new(5.0, 0.0, 0.0, 0.0));
        assert!(SampleDb::new(vec![e]).is_err());
    }

    #[test]
    fn db_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let db = SampleDb::new(vec![car_entry(), car_entry()]).unwrap();
        db.save(dir.path()).unwrap();
        assert_eq!(SampleDb::load(dir.path()).unwrap(), db);
    }

    fn sampled_scene() -> (Scene, Vec<usize>) {
        let mut s = empty_scene();
        s.gt_boxes.push(Box3D::new(Point3::new(10.0, 0.0, 0.0), Vector3::new(4.0, 2.0, 1.5), 0.0));
        s.classes.push("Car".into());
        s.mask_visible.push(true);
        s.inserted.push(false);
        let db = SampleDb::new(vec![car_entry()]).unwrap();
        let cfg = GtSampleConfig::from_grid(&Default::default());
        let (s, r) = gt_sample(&s, &db, 5, &cfg, &mut RandomStream::new(11)).unwrap();
        (s, r.inserted_indices)
    }

    #[test]
    fn dropout_extremes() {
        let (s, idx) = sampled_scene();
        assert_eq!(idx.len(), 5);
        let keep = dropout_masks(&s, &idx, 0.0, &mut RandomStream::new(1)).unwrap();
        assert!(keep.mask_visible.iter().all(|&v| v));
        let drop = dropout_masks(&s, &idx, 1.0, &mut RandomStream::new(1)).unwrap();
        assert!(drop.mask_visible[0]);
        assert!(idx.iter().all(|&i| !drop.mask_visible[i]));
    }

    #[test]
    fn dropout_errors() {
        let (s, _) = sampled_scene();
        assert!(matches!(
            dropout_masks(&s, &[99], 0.5, &mut RandomStream::new(1)),
            Err(AugmentError::IndexOutOfRange { index: 99, .. })
        ));
        assert!(matches!(
            dropout_masks(&s, &[0], 0.5, &mut RandomStream::new(1)),
            Err(AugmentError::NotInserted(0))
        ));
        assert!(matches!(
            dropout_masks(&s, &[1], 1.5, &mut RandomStream::new(1)),
            Err(AugmentError::InvalidFraction(_))
        ));
    }

    #[test]
    fn drop_points_extremes_and_order() {
        let pts: Vec<LidarPoint> = (0..100).map(|i| LidarPoint::new(i as f32, 0.0, 0.0, 0.0)).collect();
        let mut rng = RandomStream::new(8);
        assert_eq!(drop_points(&pts, 0.0, &mut rng).unwrap(), pts);
        assert!(drop_points(&pts, 1.0, &mut rng).unwrap().is_empty());
        let kept = drop_points(&pts, 0.5, &mut rng).unwrap();
        assert!(kept.windows(2).all(|w| w[0].x < w[1].x));
        assert!(drop_points(&pts, -0.1, &mut rng).is_err());
    }

    #[test]
    fn drop_fraction_concentrates() {
        // Binomial(10000, 0.9): sd = 30, so [8800, 9200] is beyond 6 sd
        let pts = vec![LidarPoint::default(); 10_000];
        for seed in 0..100 {
            let n = drop_points(&pts, 0.1, &mut RandomStream::new(seed)).unwrap().len();
            assert!((8_800..=9_200).contains(&n), "seed {seed}: {n}");
        }
    }
}
