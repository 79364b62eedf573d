//! Dense voxel fusion: multi-scale LiDAR voxel features weighted by 2D
//! foreground confidence sampled at projected voxel centers.

pub mod augment;
pub mod calib;
pub mod cli;
pub mod dataio;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod heatmap;
pub mod rng;
pub mod voxelgrid;
