//! Foreground heatmaps built from 2D boxes, and continuous sampling of them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{CalibError, CameraCalib, PixelRect};
use crate::geometry::Box3D;
use crate::rng::RandomStream;

/// Magic bytes of the raw float heatmap format.
pub const RAW_MAGIC: &[u8; 4] = b"DVFH";
const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("image has zero width or height")]
    EmptyImage,
    #[error("heatmap dims {got:?} differ from {expected:?}")]
    DimMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid confidence range [{a}, {b}]")]
    InvalidRange { a: f64, b: f64 },
    #[error("{boxes} boxes but {flags} visibility flags")]
    FlagCountMismatch { boxes: usize, flags: usize },
    #[error("malformed detection at line {line}: {reason}")]
    MalformedDetection { line: usize, reason: String },
    #[error("malformed heatmap file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Calib(#[from] CalibError),
}

/// Axis-aligned image box with a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
    pub confidence: f64,
}

impl Box2D {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64, confidence: f64) -> Result<Self, HeatmapError> {
        let b = Self {
            u1,
            v1,
            u2,
            v2,
            confidence,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_rect(r: &PixelRect, confidence: f64) -> Result<Self, HeatmapError> {
        Self::new(r.u1, r.v1, r.u2, r.v2, confidence)
    }

    pub fn validate(&self) -> Result<(), HeatmapError> {
        let bounds = [self.u1, self.v1, self.u2, self.v2];
        if !bounds.iter().all(|x| x.is_finite()) {
            return Err(HeatmapError::InvalidBox("non-finite bound".into()));
        }
        if self.u1 > self.u2 || self.v1 > self.v2 {
            return Err(HeatmapError::InvalidBox(format!(
                "unordered bounds u [{}, {}], v [{}, {}]",
                self.u1, self.u2, self.v1, self.v2
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(HeatmapError::InvalidBox(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRange {
    pub a: f64,
    pub b: f64,
}

impl Default for ConfidenceRange {
    fn default() -> Self {
        Self { a: 0.8, b: 1.0 }
    }
}

impl ConfidenceRange {
    pub fn new(a: f64, b: f64) -> Result<Self, HeatmapError> {
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(HeatmapError::InvalidRange { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn draw(&self, rng: &mut RandomStream) -> f64 {
        rng.uniform(self.a, self.b)
            .expect("confidence range is validated on construction")
    }
}

/// `height x width` field of foreground confidences in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundHeatmap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl ForegroundHeatmap {
    pub fn zeros(width: u32, height: u32) -> Result<Self, HeatmapError> {
        if width == 0 || height == 0 {
            return Err(HeatmapError::EmptyImage);
        }
        Ok(Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        })
    }

    pub fn constant(width: u32, height: u32, value: f32) -> Result<Self, HeatmapError> {
        let mut m = Self::zeros(width, height)?;
        m.values.fill(value.clamp(0.0, 1.0));
        Ok(m)
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f32>) -> Result<Self, HeatmapError> {
        if width == 0 || height == 0 {
            return Err(HeatmapError::EmptyImage);
        }
        if values.len() != width as usize * height as usize {
            return Err(HeatmapError::MalformedFile(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(HeatmapError::MalformedFile(format!("value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Value of the pixel in row `i`, column `j`.
    pub fn get(&self, i: u32, j: u32) -> f32 {
        self.values[i as usize * self.width as usize + j as usize]
    }

    fn check_dims(&self, other: &ForegroundHeatmap) -> Result<(), HeatmapError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(HeatmapError::DimMismatch {
                expected: (self.width, self.height),
                got: (other.width, other.height),
            });
        }
        Ok(())
    }

    /// Pixel-wise max with `other`.
    pub fn max_assign(&mut self, other: &ForegroundHeatmap) -> Result<(), HeatmapError> {
        self.check_dims(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.max(*b);
        }
        Ok(())
    }

    /// Raise every pixel inside `b` (inclusive integer bounds, clipped to the
    /// image) to at least `b.confidence`.
    fn paint_max(&mut self, b: &Box2D) {
        let Some((i0, i1, j0, j1)) = pixel_span(b, self.width, self.height) else {
            return;
        };
        let c = b.confidence as f32;
        let w = self.width as usize;
        for i in i0..=i1 {
            for v in &mut self.values[i * w + j0..=i * w + j1] {
                *v = v.max(c);
            }
        }
    }

    /// Bilinear interpolation between pixel centers; pixel `(i, j)` is centered
    /// at `(u, v) = (j, i)`. Samples outside `[0, W-1] x [0, H-1]` are 0.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let wmax = self.width as f64 - 1.0;
        let hmax = self.height as f64 - 1.0;
        if !(u >= 0.0 && v >= 0.0 && u <= wmax && v <= hmax) {
            return 0.0;
        }
        let j0 = u.floor() as u32;
        let i0 = v.floor() as u32;
        let j1 = (j0 + 1).min(self.width - 1);
        let i1 = (i0 + 1).min(self.height - 1);
        let fu = u - j0 as f64;
        let fv = v - i0 as f64;
        let p00 = self.get(i0, j0) as f64;
        let p01 = self.get(i0, j1) as f64;
        let p10 = self.get(i1, j0) as f64;
        let p11 = self.get(i1, j1) as f64;
        let top = p00 + (p01 - p00) * fu;
        let bottom = p10 + (p11 - p10) * fu;
        (top + (bottom - top) * fv).clamp(0.0, 1.0)
    }

    /// 8-bit binary PGM (`P5`), each pixel `round(255 * value)`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|&v| (255.0 * v as f64).round() as u8));
        out
    }

    /// `DVFH` magic, little-endian `u32` width, height and a zero reserved word,
    /// then row-major little-endian `f32` values.
    pub fn to_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw(bytes: &[u8]) -> Result<Self, HeatmapError> {
        if bytes.len() < RAW_HEADER_LEN || &bytes[..4] != RAW_MAGIC {
            return Err(HeatmapError::MalformedFile("missing DVFH header".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
        let (width, height, reserved) = (word(1), word(2), word(3));
        if reserved != 0 {
            return Err(HeatmapError::MalformedFile("reserved word is not zero".into()));
        }
        let body = &bytes[RAW_HEADER_LEN..];
        if body.len() != 4 * width as usize * height as usize {
            return Err(HeatmapError::MalformedFile(format!(
                "payload of {} bytes for a {width}x{height} map",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_values(width, height, values)
    }
}

/// Inclusive pixel row/column span `(i0, i1, j0, j1)` covered by `b`.
fn pixel_span(b: &Box2D, width: u32, height: u32) -> Option<(usize, usize, usize, usize)> {
    let wmax = width as f64 - 1.0;
    let hmax = height as f64 - 1.0;
    let j0 = b.u1.max(0.0).ceil();
    let j1 = b.u2.min(wmax).floor();
    let i0 = b.v1.max(0.0).ceil();
    let i1 = b.v2.min(hmax).floor();
    if j0 > j1 || i0 > i1 {
        return None;
    }
    Some((i0 as usize, i1 as usize, j0 as usize, j1 as usize))
}

/// Mask holding `b.confidence` on the pixels inside `b` and 0 elsewhere.
pub fn mask_from_box(b: &Box2D, width: u32, height: u32) -> Result<ForegroundHeatmap, HeatmapError> {
    b.validate()?;
    let mut m = ForegroundHeatmap::zeros(width, height)?;
    m.paint_max(b);
    Ok(m)
}

/// Pixel-wise max over `masks`; the all-zero map when the list is empty.
pub fn aggregate_masks(
    masks: &[ForegroundHeatmap],
    width: u32,
    height: u32,
) -> Result<ForegroundHeatmap, HeatmapError> {
    let mut out = ForegroundHeatmap::zeros(width, height)?;
    for m in masks {
        out.max_assign(m)?;
    }
    Ok(out)
}

/// Mask built from ground-truth boxes during training.
///
/// Every box flagged visible that projects into the image gets a confidence
/// drawn from `range`; boxes flagged invisible contribute nothing and draw
/// nothing from `rng`.
pub fn training_mask(
    calib: &CameraCalib,
    gt_boxes: &[Box3D],
    visible_flags: &[bool],
    range: &ConfidenceRange,
    rng: &mut RandomStream,
) -> Result<ForegroundHeatmap, HeatmapError> {
    if gt_boxes.len() != visible_flags.len() {
        return Err(HeatmapError::FlagCountMismatch {
            boxes: gt_boxes.len(),
            flags: visible_flags.len(),
        });
    }
    let mut out = ForegroundHeatmap::zeros(calib.image_width(), calib.image_height())?;
    for (b, &visible) in gt_boxes.iter().zip(visible_flags) {
        if !visible {
            continue;
        }
        let Some(rect) = calib.project_box3d_to_aabb2d(b)? else {
            continue;
        };
        let c = range.draw(rng);
        out.paint_max(&Box2D::from_rect(&rect, c)?);
    }
    Ok(out)
}

/// Heatmap from 2D detector output. Boxes reaching outside the image are
/// clipped.
pub fn inference_mask(dets: &[Box2D], width: u32, height: u32) -> Result<ForegroundHeatmap, HeatmapError> {
    let mut out = ForegroundHeatmap::zeros(width, height)?;
    for d in dets {
        d.validate()?;
        out.paint_max(d);
    }
    Ok(out)
}

pub fn sample(map: &ForegroundHeatmap, u: f64, v: f64) -> f64 {
    map.sample(u, v)
}

/// Parse detections, one `u1 v1 u2 v2 confidence` per line. Blank lines and
/// `#` comments are skipped.
pub fn parse_detections(text: &str) -> Result<Vec<Box2D>, HeatmapError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| HeatmapError::MalformedDetection { line: n + 1, reason };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(malformed(format!("expected 5 fields, got {}", fields.len())));
        }
        let mut vals = [0.0f64; 5];
        for (slot, tok) in vals.iter_mut().zip(&fields) {
            *slot = tok
                .parse()
                .map_err(|_| malformed(format!("bad number {tok:?}")))?;
        }
        let b = Box2D::new(vals[0], vals[1], vals[2], vals[3], vals[4])
            .map_err(|e| malformed(e.to_string()))?;
        out.push(b);
    }
    Ok(out)
}
