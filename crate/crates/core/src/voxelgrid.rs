//! Sparse voxelization and the multi-scale occupancy hierarchy.
//!
//! Level 0 holds one voxel per occupied cell with five handcrafted features:
//! normalized point count, mean intensity and the centroid offset from the
//! voxel center in voxel units. Each further level halves the resolution and
//! spreads occupancy by a Chebyshev dilation, standing in for the strided
//! sparse-convolution blocks of a voxel backbone.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::LidarPoint;

/// Number of level-0 features per voxel.
pub const BASE_CHANNELS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
    #[error("grid too small to downsample: dims {0:?}")]
    GridTooSmall([usize; 3]),
}

pub type VoxelIndex = [u32; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub range_min: [f64; 3],
    pub range_max: [f64; 3],
    pub resolution: [f64; 3],
    pub num_levels: usize,
    pub dilation_radius: u32,
}

impl Default for GridConfig {
    /// KITTI front-view range and resolution, four levels, dilation 1.
    fn default() -> Self {
        Self {
            range_min: [0.0, -40.0, -1.0],
            range_max: [70.0, 40.0, 3.0],
            resolution: [0.05, 0.05, 0.1],
            num_levels: 4,
            dilation_radius: 1,
        }
    }
}

impl GridConfig {
    /// Level-0 cell counts per axis, `floor((max - min) / res)`.
    ///
    /// Quotients within 1e-9 (relative) of an integer are snapped to it so
    /// decimal extents like `70 / 0.05` give the intended count.
    pub fn dims(&self) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let q = (self.range_max[a] - self.range_min[a]) / self.resolution[a];
            let r = q.round();
            let q = if (q - r).abs() <= 1e-9 * r.abs().max(1.0) { r } else { q.floor() };
            out[a] = q.max(0.0) as usize;
        }
        out
    }

    pub fn level_dims(&self, level: usize) -> [usize; 3] {
        let d = self.dims();
        let f = 1usize << level;
        [d[0].div_ceil(f), d[1].div_ceil(f), d[2].div_ceil(f)]
    }

    /// Edge lengths of a level-`level` voxel.
    pub fn level_resolution(&self, level: usize) -> [f64; 3] {
        let f = (1u64 << level) as f64;
        [
            self.resolution[0] * f,
            self.resolution[1] * f,
            self.resolution[2] * f,
        ]
    }

    pub fn validate(&self) -> Result<(), VoxelError> {
        for a in 0..3 {
            let (lo, hi, res) = (self.range_min[a], self.range_max[a], self.resolution[a]);
            if !(lo.is_finite() && hi.is_finite() && res.is_finite()) {
                return Err(VoxelError::InvalidConfig("non-finite extent".into()));
            }
            if hi <= lo {
                return Err(VoxelError::InvalidConfig(format!(
                    "axis {a}: range_max {hi} <= range_min {lo}"
                )));
            }
            if res <= 0.0 {
                return Err(VoxelError::InvalidConfig(format!(
                    "axis {a}: resolution {res} must be positive"
                )));
            }
        }
        if self.num_levels < 1 || self.num_levels > 16 {
            return Err(VoxelError::InvalidConfig(format!(
                "num_levels {} outside 1..=16",
                self.num_levels
            )));
        }
        if self.dilation_radius > 2 {
            return Err(VoxelError::InvalidConfig(format!(
                "dilation_radius {} outside 0..=2",
                self.dilation_radius
            )));
        }
        let need = 1usize << (self.num_levels - 1);
        let dims = self.dims();
        if dims.iter().any(|&d| d < need) {
            return Err(VoxelError::InvalidConfig(format!(
                "grid dims {dims:?} too small for {} levels",
                self.num_levels
            )));
        }
        Ok(())
    }
}

/// Occupied voxels of one hierarchy level, sorted lexicographically by index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVoxelLevel {
    pub level: usize,
    pub dims: [usize; 3],
    pub channels: usize,
    pub indices: Vec<VoxelIndex>,
    /// Row-major `occupied_count x channels`.
    pub features: Vec<f64>,
}

impl SparseVoxelLevel {
    pub fn empty(level: usize, dims: [usize; 3], channels: usize) -> Self {
        Self {
            level,
            dims,
            channels,
            indices: Vec::new(),
            features: Vec::new(),
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.indices.len()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub fn position_of(&self, idx: &VoxelIndex) -> Option<usize> {
        self.indices.binary_search(idx).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelHierarchy {
    pub levels: Vec<SparseVoxelLevel>,
    pub config: GridConfig,
}

impl VoxelHierarchy {
    pub fn occupied_counts(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.occupied_count()).collect()
    }
}

#[derive(Default)]
struct Accum {
    count: usize,
    intensity: f64,
    sum: [f64; 3],
}

/// Bucket in-range points into level-0 voxels.
pub fn voxelize(points: &[LidarPoint], config: &GridConfig) -> SparseVoxelLevel {
    let dims = config.dims();
    let mut cells: BTreeMap<VoxelIndex, Accum> = BTreeMap::new();
    for p in points {
        let pos = [p.x as f64, p.y as f64, p.z as f64];
        let mut idx = [0u32; 3];
        let mut inside = true;
        for a in 0..3 {
            let f = ((pos[a] - config.range_min[a]) / config.resolution[a]).floor();
            if !(f >= 0.0 && f < dims[a] as f64) {
                inside = false;
                break;
            }
            idx[a] = f as u32;
        }
        if !inside {
            continue;
        }
        let acc = cells.entry(idx).or_default();
        acc.count += 1;
        acc.intensity += p.intensity as f64;
        for a in 0..3 {
            acc.sum[a] += pos[a];
        }
    }

    let max_count = cells.values().map(|a| a.count).max().unwrap_or(1) as f64;
    let mut level = SparseVoxelLevel::empty(0, dims, BASE_CHANNELS);
    level.indices.reserve(cells.len());
    level.features.reserve(cells.len() * BASE_CHANNELS);
    for (idx, acc) in cells {
        let n = acc.count as f64;
        level.features.push(n / max_count);
        level.features.push(acc.intensity / n);
        for a in 0..3 {
            let center = config.range_min[a] + (idx[a] as f64 + 0.5) * config.resolution[a];
            level
                .features
                .push((acc.sum[a] / n - center) / config.resolution[a]);
        }
        level.indices.push(idx);
    }
    level
}

/// Halve the resolution of `level`, then dilate occupancy by `dilation_radius`
/// (Chebyshev) within the coarser grid.
///
/// A parent reached by children gets the mean of their features. A parent
/// created only by dilation copies the feature of the nearest contributing
/// parent (squared Euclidean distance in index space; ties go to the
/// lexicographically smallest index).
pub fn downsample(
    level: &SparseVoxelLevel,
    dilation_radius: u32,
) -> Result<SparseVoxelLevel, VoxelError> {
    if level.dims.iter().any(|&d| d < 2) {
        return Err(VoxelError::GridTooSmall(level.dims));
    }
    let dims = [
        level.dims[0].div_ceil(2),
        level.dims[1].div_ceil(2),
        level.dims[2].div_ceil(2),
    ];
    let c = level.channels;

    let mut parents: BTreeMap<VoxelIndex, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, idx) in level.indices.iter().enumerate() {
        let key = [idx[0] / 2, idx[1] / 2, idx[2] / 2];
        let entry = parents.entry(key).or_insert_with(|| (vec![0.0; c], 0));
        for (s, f) in entry.0.iter_mut().zip(level.feature(i)) {
            *s += f;
        }
        entry.1 += 1;
    }
    let contributing: Vec<(VoxelIndex, Vec<f64>)> = parents
        .into_iter()
        .map(|(k, (sum, n))| (k, sum.into_iter().map(|s| s / n as f64).collect()))
        .collect();

    let mut out = SparseVoxelLevel::empty(level.level + 1, dims, c);
    if dilation_radius == 0 {
        for (k, f) in contributing {
            out.indices.push(k);
            out.features.extend(f);
        }
        return Ok(out);
    }

    let is_contributing: HashMap<VoxelIndex, usize> = contributing
        .iter()
        .enumerate()
        .map(|(i, (k, _))| (*k, i))
        .collect();
    // dilation-created cell -> (squared distance, contributing parent position)
    let mut created: HashMap<VoxelIndex, (i64, usize)> = HashMap::new();
    let r = dilation_radius as i64;
    for (pi, (k, _)) in contributing.iter().enumerate() {
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let cand = [k[0] as i64 + dx, k[1] as i64 + dy, k[2] as i64 + dz];
                    if (0..3).any(|a| cand[a] < 0 || cand[a] >= dims[a] as i64) {
                        continue;
                    }
                    let cand = [cand[0] as u32, cand[1] as u32, cand[2] as u32];
                    if is_contributing.contains_key(&cand) {
                        continue;
                    }
                    let d2 = dx * dx + dy * dy + dz * dz;
                    // parents are visited in ascending index order, so a strict
                    // comparison keeps the lexicographically smallest on ties
                    created
                        .entry(cand)
                        .and_modify(|best| {
                            if d2 < best.0 {
                                *best = (d2, pi);
                            }
                        })
                        .or_insert((d2, pi));
                }
            }
        }
    }

    let mut all: Vec<(VoxelIndex, usize)> = contributing
        .iter()
        .enumerate()
        .map(|(i, (k, _))| (*k, i))
        .chain(created.into_iter().map(|(k, (_, pi))| (k, pi)))
        .collect();
    all.sort_unstable_by_key(|(k, _)| *k);
    out.indices.reserve(all.len());
    out.features.reserve(all.len() * c);
    for (k, pi) in all {
        out.indices.push(k);
        out.features.extend_from_slice(&contributing[pi].1);
    }
    Ok(out)
}

pub fn build_hierarchy(
    points: &[LidarPoint],
    config: &GridConfig,
) -> Result<VoxelHierarchy, VoxelError> {
    config.validate()?;
    let mut levels = Vec::with_capacity(config.num_levels);
    levels.push(voxelize(points, config));
    for l in 0..config.num_levels - 1 {
        let next = downsample(&levels[l], config.dilation_radius)?;
        levels.push(next);
    }
    Ok(VoxelHierarchy {
        levels,
        config: config.clone(),
    })
}

pub fn voxel_center(idx: &VoxelIndex, level: usize, config: &GridConfig) -> Point3<f64> {
    let res = config.level_resolution(level);
    Point3::new(
        config.range_min[0] + (idx[0] as f64 + 0.5) * res[0],
        config.range_min[1] + (idx[1] as f64 + 0.5) * res[1],
        config.range_min[2] + (idx[2] as f64 + 0.5) * res[2],
    )
}

pub fn voxel_centers(level: &SparseVoxelLevel, config: &GridConfig) -> Vec<Point3<f64>> {
    level
        .indices
        .iter()
        .map(|idx| voxel_center(idx, level.level, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cube_config(n: usize, levels: usize, dilation: u32) -> GridConfig {
        GridConfig {
            range_min: [0.0; 3],
            range_max: [n as f64; 3],
            resolution: [1.0; 3],
            num_levels: levels,
            dilation_radius: dilation,
        }
    }

    fn single(idx: VoxelIndex, dims: usize) -> SparseVoxelLevel {
        SparseVoxelLevel {
            level: 0,
            dims: [dims; 3],
            channels: 1,
            indices: vec![idx],
            features: vec![1.0],
        }
    }

    #[test]
    fn kitti_default_dims() {
        assert_eq!(GridConfig::default().dims(), [1400, 1600, 40]);
        assert_eq!(GridConfig::default().level_dims(3), [175, 200, 5]);
        GridConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut c = GridConfig::default();
        c.range_max[0] = -1.0;
        assert!(c.validate().is_err());
        let mut c = GridConfig::default();
        c.resolution[2] = 0.0;
        assert!(c.validate().is_err());
        let mut c = cube_config(4, 4, 1);
        assert!(c.validate().is_err());
        c.num_levels = 3;
        assert!(c.validate().is_ok());
        c.dilation_radius = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_cloud_voxelizes_to_nothing() {
        assert_eq!(voxelize(&[], &GridConfig::default()).occupied_count(), 0);
    }

    #[test]
    fn point_at_range_min() {
        let cfg = GridConfig::default();
        let p = LidarPoint::new(0.0, -40.0, -1.0, 0.25);
        let lvl = voxelize(&[p], &cfg);
        assert_eq!(lvl.indices, vec![[0, 0, 0]]);
        let expected = [1.0, 0.25, -0.5, -0.5, -0.5];
        for (got, want) in lvl.feature(0).iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_range_points_are_dropped() {
        let cfg = cube_config(8, 1, 0);
        let pts = [
            LidarPoint::new(-0.1, 1.0, 1.0, 0.0),
            LidarPoint::new(8.0, 1.0, 1.0, 0.0),
            LidarPoint::new(7.99, 1.0, 1.0, 0.0),
        ];
        assert_eq!(voxelize(&pts, &cfg).indices, vec![[7, 1, 1]]);
    }

    #[test]
    fn count_feature_is_normalized_by_busiest_voxel() {
        let cfg = cube_config(8, 1, 0);
        let pts = [
            LidarPoint::new(0.25, 0.5, 0.5, 1.0),
            LidarPoint::new(0.75, 0.5, 0.5, 0.0),
            LidarPoint::new(3.5, 3.5, 3.5, 0.5),
        ];
        let lvl = voxelize(&pts, &cfg);
        assert_eq!(lvl.feature(0), &[1.0, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(lvl.feature(1), &[0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_voxel_downsample() {
        let out = downsample(&single([4, 4, 4], 16), 0).unwrap();
        assert_eq!(out.indices, vec![[2, 2, 2]]);
        assert_eq!(out.level, 1);
        assert_eq!(out.dims, [8, 8, 8]);
    }

    #[test]
    fn single_voxel_dilation_gives_full_block() {
        let out = downsample(&single([4, 4, 4], 16), 1).unwrap();
        assert_eq!(out.occupied_count(), 27);
        for idx in &out.indices {
            assert!(idx.iter().all(|&i| (1..=3).contains(&i)));
        }
        assert!(out.features.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn dilation_is_clipped_at_grid_border() {
        let out = downsample(&single([0, 0, 0], 16), 1).unwrap();
        assert_eq!(out.occupied_count(), 8);
    }

    #[test]
    fn parent_feature_is_mean_of_children() {
        let mut lvl = SparseVoxelLevel::empty(0, [4, 4, 4], 2);
        let mut expected = [0.0, 0.0];
        for (n, (x, y, z)) in (0..2)
            .flat_map(|x| (0..2).flat_map(move |y| (0..2).map(move |z| (x, y, z))))
            .enumerate()
        {
            lvl.indices.push([x, y, z]);
            let f = [n as f64, (n * n) as f64 * 0.5];
            lvl.features.extend_from_slice(&f);
            expected[0] += f[0] / 8.0;
            expected[1] += f[1] / 8.0;
        }
        let out = downsample(&lvl, 0).unwrap();
        assert_eq!(out.indices, vec![[0, 0, 0]]);
        assert_relative_eq!(out.feature(0)[0], 3.5);
        assert_relative_eq!(out.feature(0)[1], 8.75);
        assert_relative_eq!(out.feature(0)[1], expected[1]);
    }

    #[test]
    fn dilated_voxel_copies_nearest_parent() {
        let mut lvl = SparseVoxelLevel::empty(0, [16, 16, 16], 1);
        lvl.indices = vec![[4, 4, 4], [8, 4, 4]];
        lvl.features = vec![1.0, 2.0];
        let out = downsample(&lvl, 1).unwrap();
        // (3,2,2) is one step from parent (2,2,2) and one from (4,2,2): tie -> (2,2,2)
        let i = out.position_of(&[3, 2, 2]).unwrap();
        assert_eq!(out.feature(i), &[1.0]);
        // (3,3,3) is sqrt(3) from both parents: tie -> (2,2,2)
        let i = out.position_of(&[3, 3, 3]).unwrap();
        assert_eq!(out.feature(i), &[1.0]);
        let i = out.position_of(&[5, 1, 1]).unwrap();
        assert_eq!(out.feature(i), &[2.0]);
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let lvl = SparseVoxelLevel::empty(3, [1, 4, 4], 5);
        assert_eq!(downsample(&lvl, 0), Err(VoxelError::GridTooSmall([1, 4, 4])));
    }

    #[test]
    fn hierarchy_counts() {
        let cfg = cube_config(64, 4, 0);
        let p = LidarPoint::new(20.5, 20.5, 20.5, 1.0);
        assert_eq!(build_hierarchy(&[], &cfg).unwrap().occupied_counts(), vec![0; 4]);
        assert_eq!(build_hierarchy(&[p], &cfg).unwrap().occupied_counts(), vec![1; 4]);
    }

    #[test]
    fn hierarchy_with_dilation_grows() {
        // 20 -> 10 (+-1: 9..11) -> 4,5 (+-1: 3..6) -> 1,2,3 (+-1: 0..4)
        let cfg = cube_config(64, 4, 1);
        let p = LidarPoint::new(20.5, 20.5, 20.5, 1.0);
        let counts = build_hierarchy(&[p], &cfg).unwrap().occupied_counts();
        assert_eq!(counts, vec![1, 27, 64, 125]);
    }

    #[test]
    fn centers_follow_level_resolution() {
        let cfg = GridConfig::default();
        let c0 = voxel_center(&[0, 0, 0], 0, &cfg);
        assert_relative_eq!(c0, Point3::new(0.025, -39.975, -0.95), epsilon = 1e-12);
        let c1 = voxel_center(&[0, 0, 0], 1, &cfg);
        assert_relative_eq!(c1, Point3::new(0.05, -39.95, -0.90), epsilon = 1e-12);
    }

    #[test]
    fn center_of_single_point_voxel_is_close() {
        let cfg = GridConfig::default();
        let p = LidarPoint::new(12.3456, -7.891, 0.4321, 0.5);
        let lvl = voxelize(&[p], &cfg);
        let c = voxel_centers(&lvl, &cfg)[0];
        let pos = p.position();
        for a in 0..3 {
            assert!((c[a] - pos[a]).abs() <= 0.5 * cfg.resolution[a] + 1e-9);
        }
    }
}
