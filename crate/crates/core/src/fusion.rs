//! Voxel-level fusion of foreground confidence.
//!
//! Every occupied voxel center is projected into the image, the heatmap is
//! sampled there to get a confidence `rho`, and the voxel feature `v` becomes
//! `rho * v + v`. The additive term keeps features of voxels the image stream
//! missed; with `rho = 0` the feature passes through untouched.

use nalgebra::Point3;
use serde::Serialize;
use thiserror::Error;

use crate::augment::GlobalTransform;
use crate::calib::{CameraCalib, PixelPoint};
use crate::heatmap::ForegroundHeatmap;
use crate::voxelgrid::{voxel_centers, GridConfig, SparseVoxelLevel, VoxelHierarchy};

/// Foreground threshold used when coloring correspondences.
pub const DEFAULT_FG_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("heatmap is {map:?} but the camera image is {image:?}")]
    HeatmapSize { map: (u32, u32), image: (u32, u32) },
    #[error("foreground threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedLevel {
    pub level: usize,
    pub channels: usize,
    /// Row-major `N x channels` fused features.
    pub features: Vec<f64>,
    pub rhos: Vec<f64>,
    pub pixel_locs: Vec<PixelPoint>,
    /// Voxel centers in the frame the calibration refers to.
    pub centers: Vec<Point3<f64>>,
    pub in_image: Vec<bool>,
}

impl FusedLevel {
    pub fn len(&self) -> usize {
        self.rhos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhos.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }
}

/// Fuse one hierarchy level with `map`.
///
/// When the scene was augmented, pass the applied transform: voxel centers are
/// mapped back to the sensor frame before projection.
pub fn fuse_level(
    level: &SparseVoxelLevel,
    config: &GridConfig,
    calib: &CameraCalib,
    map: &ForegroundHeatmap,
    inverse_transform: Option<&GlobalTransform>,
) -> Result<FusedLevel, FusionError> {
    let image = (calib.image_width(), calib.image_height());
    if (map.width(), map.height()) != image {
        return Err(FusionError::HeatmapSize {
            map: (map.width(), map.height()),
            image,
        });
    }
    let mut centers = voxel_centers(level, config);
    if let Some(t) = inverse_transform {
        for c in &mut centers {
            *c = t.invert_point(c);
        }
    }
    let pixel_locs = calib.project_points(&centers);
    let in_image: Vec<bool> = pixel_locs.iter().map(|p| p.in_image(image.0, image.1)).collect();
    let rhos: Vec<f64> = pixel_locs
        .iter()
        .map(|p| if p.in_front { map.sample(p.u, p.v) } else { 0.0 })
        .collect();

    let c = level.channels;
    let mut features = Vec::with_capacity(level.features.len());
    for (i, &rho) in rhos.iter().enumerate() {
        features.extend(level.feature(i).iter().map(|&v| rho * v + v));
    }
    debug_assert_eq!(features.len(), rhos.len() * c);

    Ok(FusedLevel {
        level: level.level,
        channels: c,
        features,
        rhos,
        pixel_locs,
        centers,
        in_image,
    })
}

/// Fuse every level independently.
pub fn fuse_hierarchy(
    h: &VoxelHierarchy,
    calib: &CameraCalib,
    map: &ForegroundHeatmap,
    inverse_transform: Option<&GlobalTransform>,
) -> Result<Vec<FusedLevel>, FusionError> {
    h.levels
        .iter()
        .map(|l| fuse_level(l, &h.config, calib, map, inverse_transform))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LevelCorrespondences {
    pub level: usize,
    pub occupied: usize,
    pub in_image: usize,
    pub foreground: usize,
    pub background: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlayRecord {
    pub level: usize,
    pub u: f64,
    pub v: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrespondenceStats {
    pub threshold: f64,
    pub levels: Vec<LevelCorrespondences>,
    pub total: LevelTotals,
    #[serde(skip)]
    pub records: Vec<OverlayRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LevelTotals {
    pub occupied: usize,
    pub in_image: usize,
    pub foreground: usize,
    pub background: usize,
}

/// Count in-image voxel-pixel correspondences per level, split at
/// `foreground_threshold` (strictly greater counts as foreground).
pub fn correspondence_report(
    fused: &[FusedLevel],
    foreground_threshold: f64,
) -> Result<CorrespondenceStats, FusionError> {
    if !(0.0..=1.0).contains(&foreground_threshold) {
        return Err(FusionError::InvalidThreshold(foreground_threshold));
    }
    let mut levels = Vec::with_capacity(fused.len());
    let mut total = LevelTotals::default();
    let mut records = Vec::new();
    for f in fused {
        let mut lc = LevelCorrespondences {
            level: f.level,
            occupied: f.len(),
            ..Default::default()
        };
        for i in 0..f.len() {
            if !f.in_image[i] {
                continue;
            }
            lc.in_image += 1;
            if f.rhos[i] > foreground_threshold {
                lc.foreground += 1;
            } else {
                lc.background += 1;
            }
            records.push(OverlayRecord {
                level: f.level,
                u: f.pixel_locs[i].u,
                v: f.pixel_locs[i].v,
                rho: f.rhos[i],
            });
        }
        total.occupied += lc.occupied;
        total.in_image += lc.in_image;
        total.foreground += lc.foreground;
        total.background += lc.background;
        levels.push(lc);
    }
    Ok(CorrespondenceStats {
        threshold: foreground_threshold,
        levels,
        total,
        records,
    })
}
