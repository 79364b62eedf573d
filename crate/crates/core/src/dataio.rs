//! KITTI file formats, synthetic scenes and artifact writers.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

use crate::augment::{SampleDb, SampleEntry, Scene};
use crate::calib::CameraCalib;
use crate::eval::bev_iou;
use crate::fusion::{CorrespondenceStats, OverlayRecord};
use crate::geometry::{Box3D, LidarPoint, PointCloud};
use crate::rng::RandomStream;
use crate::voxelgrid::GridConfig;

const VELODYNE_RECORD: usize = 16;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("velodyne data of {0} bytes is not a multiple of 16")]
    TruncatedFile(usize),
    #[error("line {line}: expected 15 or 16 fields, got {got}")]
    WrongFieldCount { line: usize, got: usize },
    #[error("line {line}: malformed number in field {field}")]
    MalformedFloat { line: usize, field: usize },
    #[error("line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("calibration chain is singular")]
    SingularCalib,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn read_velodyne(bytes: &[u8]) -> Result<PointCloud, DataIoError> {
    if bytes.len() % VELODYNE_RECORD != 0 {
        return Err(DataIoError::TruncatedFile(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(VELODYNE_RECORD)
        .map(|rec| {
            let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
            LidarPoint::new(f(0), f(1), f(2), f(3))
        })
        .collect())
}

pub fn write_velodyne(points: &[LidarPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * VELODYNE_RECORD);
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// One line of a KITTI label (or prediction) file, camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub class: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// `left, top, right, bottom` in pixels.
    pub bbox2d: [f64; 4],
    /// `height, width, length` in meters.
    pub dims: [f64; 3],
    /// Bottom-center of the box in the rectified camera frame.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl LabelRecord {
    pub fn is_dont_care(&self) -> bool {
        self.class == "DontCare"
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
            self.class,
            self.truncation,
            self.occlusion,
            self.alpha,
            self.bbox2d[0],
            self.bbox2d[1],
            self.bbox2d[2],
            self.bbox2d[3],
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.location[0],
            self.location[1],
            self.location[2],
            self.rotation_y
        );
        if let Some(score) = self.score {
            s.push_str(&format!(" {score:.4}"));
        }
        s
    }
}

/// Parse a KITTI label file. Blank lines are skipped; anything else must be a
/// well-formed record.
pub fn read_labels(text: &str) -> Result<Vec<LabelRecord>, DataIoError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 15 && fields.len() != 16 {
            return Err(DataIoError::WrongFieldCount {
                line,
                got: fields.len(),
            });
        }
        let num = |field: usize| -> Result<f64, DataIoError> {
            fields[field]
                .parse::<f64>()
                .map_err(|_| DataIoError::MalformedFloat { line, field: field + 1 })
        };
        let occ = num(2)?;
        if occ.fract() != 0.0 {
            return Err(DataIoError::MalformedFloat { line, field: 3 });
        }
        let rec = LabelRecord {
            class: fields[0].to_string(),
            truncation: num(1)?,
            occlusion: occ as i32,
            alpha: num(3)?,
            bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
            dims: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        };
        if !rec.is_dont_care() && rec.dims.iter().any(|&d| d <= 0.0) {
            return Err(DataIoError::InvalidRecord {
                line,
                reason: format!("non-positive dimensions {:?}", rec.dims),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn rect_transform(calib: &CameraCalib) -> Result<(Matrix3<f64>, Vector3<f64>, Matrix3<f64>), DataIoError> {
    let t = calib.lidar_to_rect();
    let rot: Matrix3<f64> = t.fixed_view::<3, 3>(0, 0).into_owned();
    let trans: Vector3<f64> = t.fixed_view::<3, 1>(0, 3).into_owned();
    let inv = rot.try_inverse().ok_or(DataIoError::SingularCalib)?;
    Ok((rot, trans, inv))
}

/// Convert a camera-frame label into a LiDAR-frame box.
///
/// The bottom-center location is lifted by half the height along camera `-y`,
/// mapped through `(rect · lidar_to_cam)^-1`, and the heading direction
/// `(cos ry, 0, -sin ry)` is mapped the same way to give the yaw about +Z.
pub fn camera_box_to_lidar(rec: &LabelRecord, calib: &CameraCalib) -> Result<Box3D, DataIoError> {
    let (_, trans, inv) = rect_transform(calib)?;
    let [h, w, l] = rec.dims;
    let center_cam = Vector3::new(rec.location[0], rec.location[1] - 0.5 * h, rec.location[2]);
    let center = inv * (center_cam - trans);
    let dir = inv * Vector3::new(rec.rotation_y.cos(), 0.0, -rec.rotation_y.sin());
    Ok(Box3D::new(
        Point3::from(center),
        Vector3::new(l, w, h),
        dir.y.atan2(dir.x),
    ))
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Inverse of [`camera_box_to_lidar`]; the 2D box is the clipped projection
/// (zeros when not visible).
pub fn lidar_box_to_camera(
    b: &Box3D,
    class: &str,
    calib: &CameraCalib,
    score: Option<f64>,
) -> Result<LabelRecord, DataIoError> {
    let (rot, trans, _) = rect_transform(calib)?;
    let center_cam = rot * b.center.coords + trans;
    let h = b.size.z;
    let location = [center_cam.x, center_cam.y + 0.5 * h, center_cam.z];
    let dir = rot * Vector3::new(b.yaw.cos(), b.yaw.sin(), 0.0);
    let rotation_y = (-dir.z).atan2(dir.x);
    let bbox2d = match calib.project_box3d_to_aabb2d(b) {
        Ok(Some(r)) => [r.u1, r.v1, r.u2, r.v2],
        _ => [0.0; 4],
    };
    Ok(LabelRecord {
        class: class.to_string(),
        truncation: 0.0,
        occlusion: 0,
        alpha: wrap_angle(rotation_y - location[0].atan2(location[2])),
        bbox2d,
        dims: [h, b.size.y, b.size.x],
        location,
        rotation_y,
        score,
    })
}

/// Standard passenger-car size `(length, width, height)`.
pub const CAR_SIZE: [f64; 3] = [3.9, 1.6, 1.56];

/// Points per object at 1 m; object density falls off as `1 / range^2`.
const OBJECT_DENSITY: f64 = 30_000.0;

/// Ground-plane placement of one synthetic car.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    /// Ground-plane distance from the sensor, meters.
    pub range: f64,
    /// Angle from +X toward +Y, radians.
    pub azimuth: f64,
    pub yaw: f64,
}

/// Height of the synthetic ground plane: just above the bottom of the grid.
pub fn ground_height(config: &GridConfig) -> f64 {
    config.range_min[2] + 0.05
}

pub fn object_point_count(range: f64) -> usize {
    ((OBJECT_DENSITY / (range * range)).round() as usize).max(3)
}

/// Sample `n` points on the faces of a `size` box (box frame) that face the
/// sensor at `sensor_local`, plus the roof.
fn surface_points(
    size: &Vector3<f64>,
    sensor_local: Option<&Point3<f64>>,
    n: usize,
    rng: &mut RandomStream,
) -> Vec<Point3<f64>> {
    let h = size * 0.5;
    // (axis, sign, area)
    let mut faces: Vec<(usize, f64, f64)> = Vec::new();
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            if axis == 2 && sign < 0.0 {
                continue;
            }
            let visible = match sensor_local {
                Some(s) => axis == 2 || s[axis] * sign > h[axis],
                None => true,
            };
            if visible {
                let area = (0..3).filter(|&a| a != axis).map(|a| size[a]).product::<f64>();
                faces.push((axis, sign, area));
            }
        }
    }
    let total: f64 = faces.iter().map(|f| f.2).sum();
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = rng.unit() * total;
        let mut face = faces[faces.len() - 1];
        for f in &faces {
            if pick < f.2 {
                face = *f;
                break;
            }
            pick -= f.2;
        }
        let mut p = Point3::origin();
        for a in 0..3 {
            p[a] = if a == face.0 {
                face.1 * h[a]
            } else {
                (rng.unit() * 2.0 - 1.0) * h[a]
            };
        }
        // stay strictly inside so f32 rounding never leaves the box
        pts.push(Point3::from(p.coords * 0.999));
    }
    pts
}

/// Deterministic synthetic scene with cars at the given placements.
///
/// The ground is a set of range rings with a fixed azimuth step, so ground
/// density falls with range; each car gets `object_point_count(range)` points
/// on its sensor-facing faces.
pub fn synthetic_scene_with(
    seed: u64,
    placements: &[Placement],
    config: &GridConfig,
    calib: &CameraCalib,
) -> Scene {
    let root = RandomStream::new(seed);
    let mut rng = root.split("synthetic/points");
    let ground = ground_height(config);
    let size = Vector3::new(CAR_SIZE[0], CAR_SIZE[1], CAR_SIZE[2]);

    let boxes: Vec<Box3D> = placements
        .iter()
        .map(|p| {
            let (s, c) = p.azimuth.sin_cos();
            Box3D::new(
                Point3::new(p.range * c, p.range * s, ground + 0.5 * size.z),
                size,
                p.yaw,
            )
        })
        .collect();

    let mut points = PointCloud::new();
    let max_x = config.range_max[0] - 1e-3;
    let (min_y, max_y) = (config.range_min[1] + 1e-3, config.range_max[1] - 1e-3);
    let mut r = 3.0f64;
    let half_fov = 40f64.to_radians();
    let step = 0.4f64.to_radians();
    while r < max_x {
        let mut az = -half_fov;
        while az <= half_fov {
            let x = r * az.cos();
            let y = r * az.sin();
            if x < max_x && y > min_y && y < max_y && !boxes.iter().any(|b| b.contains_bev(x, y)) {
                let z = ground + 0.02 * (rng.unit() - 0.5);
                let intensity = 0.1 + 0.2 * rng.unit();
                points.push(LidarPoint::new(x as f32, y as f32, z as f32, intensity as f32));
            }
            az += step;
        }
        r *= 1.04;
    }

    for b in &boxes {
        let sensor_local = b.world_to_local(&Point3::new(0.0, 0.0, b.center.z));
        let n = object_point_count(b.bev_range());
        for p in surface_points(&b.size, Some(&sensor_local), n, &mut rng) {
            let w = b.local_to_world(&p);
            let intensity = 0.3 + 0.6 * rng.unit();
            points.push(LidarPoint::new(w.x as f32, w.y as f32, w.z as f32, intensity as f32));
        }
    }

    let classes = vec!["Car".to_string(); boxes.len()];
    Scene::new(points, boxes, classes, calib.clone())
}

/// Synthetic scene with `n_objects` non-overlapping cars at random ranges in
/// `[8, 50)` m inside the camera's horizontal field of view.
pub fn synthetic_scene(seed: u64, n_objects: usize, config: &GridConfig, calib: &CameraCalib) -> Scene {
    let mut rng = RandomStream::new(seed).split("synthetic/placements");
    let size = Vector3::new(CAR_SIZE[0], CAR_SIZE[1], CAR_SIZE[2]);
    let mut placements: Vec<Placement> = Vec::with_capacity(n_objects);
    let mut placed: Vec<Box3D> = Vec::new();
    let mut attempts = 0;
    while placements.len() < n_objects && attempts < 100 * n_objects.max(1) {
        attempts += 1;
        let p = Placement {
            range: 8.0 + 42.0 * rng.unit(),
            azimuth: (rng.unit() * 2.0 - 1.0) * 25f64.to_radians(),
            yaw: (rng.unit() * 2.0 - 1.0) * PI,
        };
        let (s, c) = p.azimuth.sin_cos();
        // pad the footprint so cars never touch
        let b = Box3D::new(Point3::new(p.range * c, p.range * s, 0.0), size + Vector3::new(1.0, 1.0, 0.0), p.yaw);
        if placed.iter().any(|q| bev_iou(&b, q).map(|v| v > 0.0).unwrap_or(true)) {
            continue;
        }
        placed.push(b);
        placements.push(p);
    }
    synthetic_scene_with(seed, &placements, config, calib)
}

/// Database of `n` synthetic cars in their box frames, sized around the
/// standard car and resting on the synthetic ground.
pub fn synthetic_sample_db(seed: u64, n: usize, config: &GridConfig) -> SampleDb {
    let mut rng = RandomStream::new(seed).split("synthetic/sample-db");
    let ground = ground_height(config);
    let entries = (0..n)
        .map(|_| {
            let jitter = 0.9 + 0.2 * rng.unit();
            let size = Vector3::new(CAR_SIZE[0] * jitter, CAR_SIZE[1] * jitter, CAR_SIZE[2]);
            let count = object_point_count(10.0 + 30.0 * rng.unit());
            let points = surface_points(&size, None, count, &mut rng)
                .into_iter()
                .map(|p| LidarPoint::new(p.x as f32, p.y as f32, p.z as f32, (0.3 + 0.6 * rng.unit()) as f32))
                .collect();
            SampleEntry {
                points,
                template: Box3D::new(Point3::new(0.0, 0.0, ground + 0.5 * size.z), size, 0.0),
                class: "Car".to_string(),
            }
        })
        .collect();
    SampleDb::new(entries).expect("synthetic samples lie inside their boxes")
}

pub fn overlay_csv(records: &[OverlayRecord]) -> String {
    let mut out = String::from("level,u,v,rho\n");
    for r in records {
        out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.level, r.u, r.v, r.rho));
    }
    out
}

pub fn stats_json(stats: &CorrespondenceStats) -> String {
    let mut s = serde_json::to_string_pretty(stats).expect("stats serialize");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), DataIoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| DataIoError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| DataIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, DataIoError> {
    std::fs::read(path).map_err(|source| DataIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String, DataIoError> {
    std::fs::read_to_string(path).map_err(|source| DataIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_overlay_csv(path: &Path, records: &[OverlayRecord]) -> Result<(), DataIoError> {
    write_file(path, overlay_csv(records))
}

pub fn write_stats_json(path: &Path, stats: &CorrespondenceStats) -> Result<(), DataIoError> {
    write_file(path, stats_json(stats))
}

/// Write `<stem>.pgm` and `<stem>.dvfh`.
pub fn write_heatmap(
    stem: &Path,
    map: &crate::heatmap::ForegroundHeatmap,
) -> Result<(), DataIoError> {
    write_file(&stem.with_extension("pgm"), map.to_pgm())?;
    write_file(&stem.with_extension("dvfh"), map.to_raw())
}
