//! C ABI over `dvf-core`.
//!
//! Objects are opaque handles created by `dvf_*_new`/`dvf_*_parse`/`dvf_*_build`
//! and released with the matching `dvf_*_free`. Every fallible call returns a
//! [`DvfStatus`]; on failure [`dvf_last_error`] describes the most recent error
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use dvf_core::calib::{parse_calib_with_size, CameraCalib};
use dvf_core::eval::{bev_iou, iou_3d, EvalError};
use dvf_core::fusion::fuse_level;
use dvf_core::geometry::{Box3D, LidarPoint};
use dvf_core::heatmap::{inference_mask, mask_from_box, parse_detections, Box2D, ForegroundHeatmap};
use dvf_core::voxelgrid::{build_hierarchy, GridConfig, VoxelHierarchy};
use nalgebra::{Point3, Vector3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ConfigError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Camera calibration handle.
pub struct DvfCalib(CameraCalib);

/// Foreground heatmap handle.
pub struct DvfHeatmap(ForegroundHeatmap);

/// Multi-scale voxel hierarchy handle.
pub struct DvfHierarchy(VoxelHierarchy);

/// Voxel grid parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvfGridConfig {
    pub range_min: [f64; 3],
    pub range_max: [f64; 3],
    pub resolution: [f64; 3],
    pub num_levels: u32,
    pub dilation_radius: u32,
}

/// Oriented 3D box: center, `(length, width, height)`, yaw about +Z.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvfBox {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
}

impl From<GridConfig> for DvfGridConfig {
    fn from(g: GridConfig) -> Self {
        Self {
            range_min: g.range_min,
            range_max: g.range_max,
            resolution: g.resolution,
            num_levels: g.num_levels as u32,
            dilation_radius: g.dilation_radius,
        }
    }
}

impl From<&DvfGridConfig> for GridConfig {
    fn from(g: &DvfGridConfig) -> Self {
        Self {
            range_min: g.range_min,
            range_max: g.range_max,
            resolution: g.resolution,
            num_levels: g.num_levels as usize,
            dilation_radius: g.dilation_radius,
        }
    }
}

impl From<&DvfBox> for Box3D {
    fn from(b: &DvfBox) -> Self {
        Box3D::new(Point3::from(b.center), Vector3::from(b.size), b.yaw)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (DvfStatus, String);

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DvfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DvfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DvfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (DvfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DvfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the most recent failure on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dvf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dvf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse KITTI calibration text for an image of `width` x `height` pixels.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_calib_parse(
    text: *const c_char,
    width: u32,
    height: u32,
    out: *mut *mut DvfCalib,
) -> DvfStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        let calib = parse_calib_with_size(text, width, height).map_err(|e| (DvfStatus::ParseError, e.to_string()))?;
        store(out, DvfCalib(calib))
    })
}

/// Calibration of KITTI frame 000000 with a 1242 x 375 image.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_calib_kitti_reference(out: *mut *mut DvfCalib) -> DvfStatus {
    guard(|| store(out, DvfCalib(CameraCalib::kitti_reference())))
}

/// # Safety
/// `calib` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dvf_calib_free(calib: *mut DvfCalib) {
    free(calib)
}

/// # Safety
/// `calib` must be a live handle; `width` and `height` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_calib_image_size(calib: *const DvfCalib, width: *mut u32, height: *mut u32) -> DvfStatus {
    guard(|| {
        let c = deref(calib, "calib")?;
        if width.is_null() || height.is_null() {
            return Err(null("width/height"));
        }
        *width = c.0.image_width();
        *height = c.0.image_height();
        Ok(())
    })
}

/// Project `n` LiDAR points (`xyz`, 3n doubles) to `uvd` (3n doubles:
/// `u, v, depth`). `in_image` (n bytes) is optional and receives 1 for
/// points in front of the camera and inside the image.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn dvf_calib_project(
    calib: *const DvfCalib,
    xyz: *const f64,
    n: usize,
    uvd: *mut f64,
    in_image: *mut u8,
) -> DvfStatus {
    guard(|| {
        let c = &deref(calib, "calib")?.0;
        let pts = slice(xyz, 3 * n, "xyz")?;
        let out = slice_mut(uvd, 3 * n, "uvd")?;
        let mut flags = if in_image.is_null() { None } else { Some(slice_mut(in_image, n, "in_image")?) };
        for (i, p) in pts.chunks_exact(3).enumerate() {
            let px = c.project_point(&Point3::new(p[0], p[1], p[2]));
            out[3 * i..3 * i + 3].copy_from_slice(&[px.u, px.v, px.depth]);
            if let Some(f) = flags.as_deref_mut() {
                f[i] = px.in_image(c.image_width(), c.image_height()) as u8;
            }
        }
        Ok(())
    })
}

/// All-zero heatmap.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_new(width: u32, height: u32, out: *mut *mut DvfHeatmap) -> DvfStatus {
    guard(|| {
        let map = ForegroundHeatmap::zeros(width, height).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        store(out, DvfHeatmap(map))
    })
}

/// Heatmap from `width * height` row-major values in [0, 1].
///
/// # Safety
/// `values` must hold `width * height` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_from_values(
    width: u32,
    height: u32,
    values: *const f32,
    out: *mut *mut DvfHeatmap,
) -> DvfStatus {
    guard(|| {
        let vals = slice(values, width as usize * height as usize, "values")?;
        let map = ForegroundHeatmap::from_values(width, height, vals.to_vec())
            .map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        store(out, DvfHeatmap(map))
    })
}

/// Heatmap from detector output text, one `u1 v1 u2 v2 confidence` per line.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_from_detections(
    text: *const c_char,
    width: u32,
    height: u32,
    out: *mut *mut DvfHeatmap,
) -> DvfStatus {
    guard(|| {
        let dets = parse_detections(c_str(text, "text")?).map_err(|e| (DvfStatus::ParseError, e.to_string()))?;
        let map = inference_mask(&dets, width, height).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        store(out, DvfHeatmap(map))
    })
}

/// Raise the pixels inside the box (inclusive integer bounds, clipped) to at
/// least `confidence`.
///
/// # Safety
/// `map` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_add_box(
    map: *mut DvfHeatmap,
    u1: f64,
    v1: f64,
    u2: f64,
    v2: f64,
    confidence: f64,
) -> DvfStatus {
    guard(|| {
        let m = &mut map.as_mut().ok_or_else(|| null("map"))?.0;
        let b = Box2D::new(u1, v1, u2, v2, confidence).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        let mask = mask_from_box(&b, m.width(), m.height()).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        m.max_assign(&mask).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))
    })
}

/// Bilinear sample at `(u, v)`; 0 outside the image.
///
/// # Safety
/// `map` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_sample(map: *const DvfHeatmap, u: f64, v: f64, out: *mut f64) -> DvfStatus {
    guard(|| {
        let m = deref(map, "map")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.0.sample(u, v);
        Ok(())
    })
}

/// Borrow the row-major values; valid until the map is modified or freed.
///
/// # Safety
/// `map` must be a live handle; `values` and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_values(
    map: *const DvfHeatmap,
    values: *mut *const f32,
    len: *mut usize,
) -> DvfStatus {
    guard(|| {
        let m = deref(map, "map")?;
        if values.is_null() || len.is_null() {
            return Err(null("values/len"));
        }
        *values = m.0.values().as_ptr();
        *len = m.0.values().len();
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dvf_heatmap_free(map: *mut DvfHeatmap) {
    free(map)
}

/// KITTI default grid: x [0, 70], y [-40, 40], z [-1, 3], voxels 0.05 x 0.05 x
/// 0.1 m, four levels, dilation 1.
#[no_mangle]
pub extern "C" fn dvf_grid_config_default() -> DvfGridConfig {
    GridConfig::default().into()
}

/// Voxelize `n` points (`xyzi`, 4n floats) and build the level hierarchy.
///
/// # Safety
/// `xyzi` must hold `4 * n` floats; `config` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_hierarchy_build(
    xyzi: *const f32,
    n: usize,
    config: *const DvfGridConfig,
    out: *mut *mut DvfHierarchy,
) -> DvfStatus {
    guard(|| {
        let cfg = GridConfig::from(deref(config, "config")?);
        let raw = slice(xyzi, 4 * n, "xyzi")?;
        let points: Vec<LidarPoint> = raw.chunks_exact(4).map(|p| LidarPoint::new(p[0], p[1], p[2], p[3])).collect();
        let h = build_hierarchy(&points, &cfg).map_err(|e| (DvfStatus::ConfigError, e.to_string()))?;
        store(out, DvfHierarchy(h))
    })
}

/// # Safety
/// `h` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn dvf_hierarchy_free(h: *mut DvfHierarchy) {
    free(h)
}

fn level_of(h: &VoxelHierarchy, level: usize) -> Result<&dvf_core::voxelgrid::SparseVoxelLevel, Failure> {
    h.levels.get(level).ok_or_else(|| {
        (
            DvfStatus::InvalidArgument,
            format!("level {level} out of range ({} levels)", h.levels.len()),
        )
    })
}

/// # Safety
/// `h` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_hierarchy_num_levels(h: *const DvfHierarchy, out: *mut usize) -> DvfStatus {
    guard(|| {
        let h = deref(h, "hierarchy")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = h.0.levels.len();
        Ok(())
    })
}

/// Occupied voxel count and feature channels of one level.
///
/// # Safety
/// `h` must be a live handle; `occupied` and `channels` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_hierarchy_level_info(
    h: *const DvfHierarchy,
    level: usize,
    occupied: *mut usize,
    channels: *mut usize,
) -> DvfStatus {
    guard(|| {
        let l = level_of(&deref(h, "hierarchy")?.0, level)?;
        if occupied.is_null() || channels.is_null() {
            return Err(null("occupied/channels"));
        }
        *occupied = l.occupied_count();
        *channels = l.channels;
        Ok(())
    })
}

fn check_capacity(need: usize, cap: usize, what: &str) -> Result<(), Failure> {
    if cap < need {
        return Err((DvfStatus::BufferTooSmall, format!("{what} needs {need} elements, got {cap}")));
    }
    Ok(())
}

/// Copy voxel indices (`3 * occupied` values, sorted) and features
/// (`occupied * channels`) of one level. Either buffer may be null.
///
/// # Safety
/// Non-null buffers must hold their stated capacities.
#[no_mangle]
pub unsafe extern "C" fn dvf_hierarchy_level_data(
    h: *const DvfHierarchy,
    level: usize,
    indices: *mut u32,
    indices_cap: usize,
    features: *mut f64,
    features_cap: usize,
) -> DvfStatus {
    guard(|| {
        let l = level_of(&deref(h, "hierarchy")?.0, level)?;
        if !indices.is_null() {
            check_capacity(3 * l.indices.len(), indices_cap, "indices")?;
            let dst = slice_mut(indices, 3 * l.indices.len(), "indices")?;
            for (chunk, idx) in dst.chunks_exact_mut(3).zip(&l.indices) {
                chunk.copy_from_slice(idx);
            }
        }
        if !features.is_null() {
            check_capacity(l.features.len(), features_cap, "features")?;
            slice_mut(features, l.features.len(), "features")?.copy_from_slice(&l.features);
        }
        Ok(())
    })
}

/// Fuse one level with `map`: `features` receives `(1 + rho) * v` for every
/// voxel (`occupied * channels`), `rho` the sampled weight per voxel. Either
/// output may be null.
///
/// # Safety
/// Handles must be live; non-null buffers must hold their capacities.
#[no_mangle]
pub unsafe extern "C" fn dvf_hierarchy_fuse_level(
    h: *const DvfHierarchy,
    level: usize,
    calib: *const DvfCalib,
    map: *const DvfHeatmap,
    features: *mut f64,
    features_cap: usize,
    rho: *mut f64,
    rho_cap: usize,
) -> DvfStatus {
    guard(|| {
        let hier = &deref(h, "hierarchy")?.0;
        let l = level_of(hier, level)?;
        let calib = &deref(calib, "calib")?.0;
        let map = &deref(map, "map")?.0;
        let fused =
            fuse_level(l, &hier.config, calib, map, None).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        if !features.is_null() {
            check_capacity(fused.features.len(), features_cap, "features")?;
            slice_mut(features, fused.features.len(), "features")?.copy_from_slice(&fused.features);
        }
        if !rho.is_null() {
            check_capacity(fused.rhos.len(), rho_cap, "rho")?;
            slice_mut(rho, fused.rhos.len(), "rho")?.copy_from_slice(&fused.rhos);
        }
        Ok(())
    })
}

unsafe fn pair_iou(
    a: *const DvfBox,
    b: *const DvfBox,
    out: *mut f64,
    f: fn(&Box3D, &Box3D) -> Result<f64, EvalError>,
) -> DvfStatus {
    guard(|| {
        let (a, b) = (Box3D::from(deref(a, "a")?), Box3D::from(deref(b, "b")?));
        if out.is_null() {
            return Err(null("out"));
        }
        *out = f(&a, &b).map_err(|e| (DvfStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Bird's-eye-view IoU of two oriented boxes.
///
/// # Safety
/// `a`, `b` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_bev_iou(a: *const DvfBox, b: *const DvfBox, out: *mut f64) -> DvfStatus {
    pair_iou(a, b, out, bev_iou)
}

/// 3D IoU of two oriented boxes.
///
/// # Safety
/// `a`, `b` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dvf_iou_3d(a: *const DvfBox, b: *const DvfBox, out: *mut f64) -> DvfStatus {
    pair_iou(a, b, out, iou_3d)
}
