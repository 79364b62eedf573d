//! Rotated IoU, AP at 40 recall positions, range-binned evaluation and the
//! correspondence-density comparison between point and voxel fusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::CameraCalib;
use crate::dataio::LabelRecord;
use crate::fusion::FusedLevel;
use crate::geometry::{convex_intersection_area, Box3D, LidarPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("degenerate box (zero area)")]
    DegenerateBox,
    #[error("no IoU threshold configured for class {0:?}")]
    UnknownClass(String),
}

pub fn bev_iou(a: &Box3D, b: &Box3D) -> Result<f64, EvalError> {
    if !(a.bev_area() > 0.0 && b.bev_area() > 0.0) {
        return Err(EvalError::DegenerateBox);
    }
    let inter = bev_intersection(a, b);
    let union = a.bev_area() + b.bev_area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64, EvalError> {
    if !(a.volume() > 0.0 && b.volume() > 0.0) {
        return Err(EvalError::DegenerateBox);
    }
    let dz = (a.z_max().min(b.z_max()) - a.z_min().max(b.z_min())).max(0.0);
    if dz == 0.0 {
        return Ok(0.0);
    }
    let inter = bev_intersection(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

fn bev_intersection(a: &Box3D, b: &Box3D) -> f64 {
    // cheap reject on circumscribed circles
    let ra = 0.5 * a.size.x.hypot(a.size.y);
    let rb = 0.5 * b.size.x.hypot(b.size.y);
    let d = (a.center.x - b.center.x).hypot(a.center.y - b.center.y);
    if d > ra + rb {
        return 0.0;
    }
    convex_intersection_area(&a.bev_polygon(), &b.bev_polygon()).min(a.bev_area().min(b.bev_area()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IouKind {
    Bev,
    ThreeD,
}

impl IouKind {
    pub fn iou(&self, a: &Box3D, b: &Box3D) -> Result<f64, EvalError> {
        match self {
            IouKind::Bev => bev_iou(a, b),
            IouKind::ThreeD => iou_3d(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub box3d: Box3D,
    pub score: f64,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub frame: usize,
    pub box3d: Box3D,
    pub class: String,
}

/// Half-open range bin `[lo, hi)` on ground-plane distance; `hi = None` is
/// unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBin {
    pub lo: f64,
    pub hi: Option<f64>,
}

impl RangeBin {
    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && self.hi.is_none_or(|hi| r < hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: BTreeMap<String, f64>,
    pub recall_positions: usize,
    pub range_bins: Vec<RangeBin>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let iou_thresholds = [("Car", 0.7), ("Pedestrian", 0.5), ("Cyclist", 0.5)]
            .into_iter()
            .map(|(c, t)| (c.to_string(), t))
            .collect();
        Self {
            iou_thresholds,
            recall_positions: 40,
            range_bins: vec![
                RangeBin { lo: 0.0, hi: Some(20.0) },
                RangeBin { lo: 20.0, hi: Some(40.0) },
                RangeBin { lo: 40.0, hi: None },
            ],
        }
    }
}

impl EvalConfig {
    pub fn threshold(&self, class: &str) -> Result<f64, EvalError> {
        self.iou_thresholds
            .get(class)
            .copied()
            .ok_or_else(|| EvalError::UnknownClass(class.to_string()))
    }
}

/// Outcome of greedy matching: per detection (in descending score order) its
/// score and whether it matched.
struct Matching {
    scored: Vec<(f64, bool)>,
    num_gt: usize,
}

fn greedy_match(
    dets: &[&Detection],
    gts: &[&GroundTruth],
    threshold: f64,
    kind: IouKind,
) -> Result<Matching, EvalError> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score));
    let mut taken = vec![false; gts.len()];
    let mut scored = Vec::with_capacity(dets.len());
    for i in order {
        let d = dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.frame != d.frame {
                continue;
            }
            let iou = kind.iou(&d.box3d, &gt.box3d)?;
            if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        scored.push((d.score, best.is_some()));
    }
    Ok(Matching {
        scored,
        num_gt: gts.len(),
    })
}

/// Interpolated-precision AP over `positions` evenly spaced recall levels
/// `1/n, 2/n, ..., 1`. Precision/recall points are taken at every distinct
/// score cutoff.
fn interpolated_ap(m: &Matching, positions: usize) -> f64 {
    if m.num_gt == 0 || positions == 0 {
        return 0.0;
    }
    // (tp, tp + fp) at the end of each run of equal scores
    let mut points: Vec<(usize, usize)> = Vec::new();
    let mut tp = 0;
    for (k, &(score, hit)) in m.scored.iter().enumerate() {
        tp += hit as usize;
        let last_of_run = m.scored.get(k + 1).is_none_or(|next| next.0 != score);
        if last_of_run {
            points.push((tp, k + 1));
        }
    }
    // precision envelope from the high-recall end
    let mut envelope = vec![0.0; points.len()];
    let mut best: f64 = 0.0;
    for (e, &(tp, n)) in envelope.iter_mut().zip(&points).rev() {
        best = best.max(tp as f64 / n as f64);
        *e = best;
    }
    let mut sum = 0.0;
    let mut p = 0;
    for k in 1..=positions {
        // recall tp/num_gt >= k/positions, compared exactly in integers
        while p < points.len() && points[p].0 * positions < k * m.num_gt {
            p += 1;
        }
        if p == points.len() {
            break;
        }
        sum += envelope[p];
    }
    sum / positions as f64
}

/// AP|R40 for a single class. Detections match at most one ground truth in
/// their own frame, greedily by descending score and then highest IoU.
pub fn ap_r40(
    dets: &[Detection],
    gts: &[GroundTruth],
    class: &str,
    config: &EvalConfig,
    kind: IouKind,
) -> Result<f64, EvalError> {
    let threshold = config.threshold(class)?;
    let d: Vec<&Detection> = dets.iter().filter(|d| d.class == class).collect();
    let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.class == class).collect();
    let m = greedy_match(&d, &g, threshold, kind)?;
    Ok(interpolated_ap(&m, config.recall_positions))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinAp {
    pub lo: f64,
    pub hi: Option<f64>,
    pub ap: f64,
    pub num_gt: usize,
    pub num_det: usize,
    /// No ground truth fell in this bin; `ap` is 0 by convention.
    pub empty: bool,
}

/// AP per range bin. Ground truths and detections are binned independently by
/// the ground-plane distance of their centers.
pub fn range_binned_ap(
    dets: &[Detection],
    gts: &[GroundTruth],
    class: &str,
    config: &EvalConfig,
    kind: IouKind,
) -> Result<Vec<BinAp>, EvalError> {
    config.threshold(class)?;
    config
        .range_bins
        .iter()
        .map(|bin| {
            let d: Vec<Detection> = dets
                .iter()
                .filter(|d| d.class == class && bin.contains(d.box3d.bev_range()))
                .cloned()
                .collect();
            let g: Vec<GroundTruth> = gts
                .iter()
                .filter(|g| g.class == class && bin.contains(g.box3d.bev_range()))
                .cloned()
                .collect();
            Ok(BinAp {
                lo: bin.lo,
                hi: bin.hi,
                ap: ap_r40(&d, &g, class, config, kind)?,
                num_gt: g.len(),
                num_det: d.len(),
                empty: g.is_empty(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinReport {
    pub lo: f64,
    pub hi: Option<f64>,
    pub ap_3d: f64,
    pub ap_bev: f64,
    pub num_gt: usize,
    pub num_det: usize,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCounts {
    pub gt: usize,
    pub det: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub ap_3d: f64,
    pub ap_bev: f64,
    pub per_bin: Vec<BinReport>,
    pub counts: ClassCounts,
}

/// Full report for every configured class, keyed by class name.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    config: &EvalConfig,
) -> Result<BTreeMap<String, ClassReport>, EvalError> {
    let mut out = BTreeMap::new();
    for class in config.iou_thresholds.keys() {
        let ap_3d = ap_r40(dets, gts, class, config, IouKind::ThreeD)?;
        let ap_bev = ap_r40(dets, gts, class, config, IouKind::Bev)?;
        let bins_3d = range_binned_ap(dets, gts, class, config, IouKind::ThreeD)?;
        let bins_bev = range_binned_ap(dets, gts, class, config, IouKind::Bev)?;
        let per_bin = bins_3d
            .into_iter()
            .zip(bins_bev)
            .map(|(a, b)| BinReport {
                lo: a.lo,
                hi: a.hi,
                ap_3d: a.ap,
                ap_bev: b.ap,
                num_gt: a.num_gt,
                num_det: a.num_det,
                empty: a.empty,
            })
            .collect();
        out.insert(
            class.clone(),
            ClassReport {
                ap_3d,
                ap_bev,
                per_bin,
                counts: ClassCounts {
                    gt: gts.iter().filter(|g| &g.class == class).count(),
                    det: dets.iter().filter(|d| &d.class == class).count(),
                },
            },
        );
    }
    Ok(out)
}

/// KITTI difficulty buckets. Thresholds are the ones of the official devkit:
/// minimum 2D box height in pixels, maximum occlusion level and maximum
/// truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub fn limits(&self) -> (f64, u8, f64) {
        match self {
            Difficulty::Easy => (40.0, 0, 0.15),
            Difficulty::Moderate => (25.0, 1, 0.30),
            Difficulty::Hard => (25.0, 2, 0.50),
        }
    }

    pub fn admits(&self, rec: &LabelRecord) -> bool {
        let (min_height, max_occlusion, max_truncation) = self.limits();
        let height = rec.bbox2d[3] - rec.bbox2d[1];
        height >= min_height && rec.occlusion <= max_occlusion as i32 && rec.truncation <= max_truncation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: Option<f64>,
    pub point_correspondences: usize,
    pub voxel_correspondences: usize,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    /// Points projecting inside the image with positive depth.
    pub point_correspondences: usize,
    /// In-image projected voxel centers summed over all levels.
    pub voxel_correspondences: usize,
    pub per_level: Vec<usize>,
    /// `voxel / point`, `None` when there are no point correspondences.
    pub ratio: Option<f64>,
    pub per_bin: Vec<DensityBin>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Compare point-level and multi-scale voxel-level image correspondences.
/// `points` must be in the frame `calib` refers to, as are the fused centers.
pub fn density_comparison(
    points: &[LidarPoint],
    fused: &[FusedLevel],
    calib: &CameraCalib,
    bins: &[RangeBin],
) -> DensityReport {
    let (w, h) = (calib.image_width(), calib.image_height());
    let point_ranges: Vec<f64> = points
        .iter()
        .filter(|p| calib.project_point(&p.position()).in_image(w, h))
        .map(|p| (p.x as f64).hypot(p.y as f64))
        .collect();
    let voxel_ranges: Vec<f64> = fused
        .iter()
        .flat_map(|f| {
            (0..f.len())
                .filter(|&i| f.in_image[i])
                .map(|i| f.centers[i].x.hypot(f.centers[i].y))
        })
        .collect();
    let per_level = fused
        .iter()
        .map(|f| f.in_image.iter().filter(|&&b| b).count())
        .collect();
    let per_bin = bins
        .iter()
        .map(|bin| {
            let a = point_ranges.iter().filter(|&&r| bin.contains(r)).count();
            let b = voxel_ranges.iter().filter(|&&r| bin.contains(r)).count();
            DensityBin {
                lo: bin.lo,
                hi: bin.hi,
                point_correspondences: a,
                voxel_correspondences: b,
                ratio: ratio(b, a),
            }
        })
        .collect();
    DensityReport {
        point_correspondences: point_ranges.len(),
        voxel_correspondences: voxel_ranges.len(),
        per_level,
        ratio: ratio(voxel_ranges.len(), point_ranges.len()),
        per_bin,
    }
}
