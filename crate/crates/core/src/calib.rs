//! Camera model and LiDAR-to-pixel projection.
//!
//! The chain is the KITTI one: `pixel ~ P2 · R0_rect · Tr_velo_to_cam · [p; 1]`.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Point3, Vector3, Vector4};
use thiserror::Error;

use crate::geometry::Box3D;

/// Orthonormality tolerance on the rotation block of `lidar_to_cam`.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// KITTI color camera resolution, used when a calibration file carries no size.
pub const KITTI_IMAGE_WIDTH: u32 = 1242;
pub const KITTI_IMAGE_HEIGHT: u32 = 375;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error("malformed float at line {line}, column {column}")]
    MalformedFloat { line: usize, column: usize },
    #[error("key {key:?} expects {expected} values, got {got}")]
    WrongCount {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid calibration: {0}")]
    Invalid(String),
    #[error("box dimensions must be positive")]
    NonPositiveDims,
    #[error("projection chain is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub in_front: bool,
}

impl PixelPoint {
    /// In front of the camera and inside the sampleable image domain
    /// `[0, W-1] x [0, H-1]`.
    pub fn in_image(&self, width: u32, height: u32) -> bool {
        self.in_front
            && self.u >= 0.0
            && self.v >= 0.0
            && self.u <= (width as f64 - 1.0)
            && self.v <= (height as f64 - 1.0)
    }
}

/// Axis-aligned pixel rectangle, clipped to the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRect {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl PixelRect {
    pub fn area(&self) -> f64 {
        (self.u2 - self.u1).max(0.0) * (self.v2 - self.v1).max(0.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u1 && u <= self.u2 && v >= self.v1 && v <= self.v2
    }

    pub fn iou(&self, other: &PixelRect) -> f64 {
        let iw = (self.u2.min(other.u2) - self.u1.max(other.u1)).max(0.0);
        let ih = (self.v2.min(other.v2) - self.v1.max(other.v1)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    proj: Matrix3x4<f64>,
    rect: Matrix4<f64>,
    lidar_to_cam: Matrix4<f64>,
    image_width: u32,
    image_height: u32,
    chain: Matrix3x4<f64>,
}

impl CameraCalib {
    pub fn new(
        proj: Matrix3x4<f64>,
        rect: Matrix4<f64>,
        lidar_to_cam: Matrix4<f64>,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, CalibError> {
        if image_width == 0 || image_height == 0 {
            return Err(CalibError::Invalid("image size must be positive".into()));
        }
        let all_finite = proj.iter().chain(rect.iter()).chain(lidar_to_cam.iter());
        if !all_finite.into_iter().all(|x| x.is_finite()) {
            return Err(CalibError::Invalid("non-finite matrix entry".into()));
        }
        let bottom = Vector4::new(0.0, 0.0, 0.0, 1.0).transpose();
        if rect.row(3) != bottom || lidar_to_cam.row(3) != bottom {
            return Err(CalibError::Invalid("bottom row must be (0,0,0,1)".into()));
        }
        let rot: Matrix3<f64> = lidar_to_cam.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (rot.transpose() * rot - Matrix3::identity()).amax();
        if err > ROTATION_TOLERANCE {
            return Err(CalibError::Invalid(format!(
                "lidar_to_cam rotation not orthonormal (error {err:.3e})"
            )));
        }
        let chain = proj * rect * lidar_to_cam;
        Ok(Self {
            proj,
            rect,
            lidar_to_cam,
            image_width,
            image_height,
            chain,
        })
    }

    /// Pinhole camera with focal length `f` and principal point `(cx, cy)`
    /// whose optical frame coincides with the LiDAR frame.
    pub fn pinhole_identity(f: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        let proj = Matrix3x4::new(f, 0.0, cx, 0.0, 0.0, f, cy, 0.0, 0.0, 0.0, 1.0, 0.0);
        Self::new(proj, Matrix4::identity(), Matrix4::identity(), width, height)
            .expect("pinhole calibration is valid")
    }

    /// Camera looking along LiDAR +X with the KITTI axis convention
    /// (camera x = -lidar y, camera y = -lidar z, camera z = lidar x), no offset.
    pub fn forward_pinhole(f: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        let proj = Matrix3x4::new(f, 0.0, cx, 0.0, 0.0, f, cy, 0.0, 0.0, 0.0, 1.0, 0.0);
        Self::new(proj, Matrix4::identity(), velo_axes(), width, height)
            .expect("forward pinhole calibration is valid")
    }

    /// Calibration of KITTI training frame 000000 (left color camera).
    pub fn kitti_reference() -> Self {
        parse_calib(KITTI_REFERENCE_CALIB).expect("reference calibration parses")
    }

    pub fn proj(&self) -> &Matrix3x4<f64> {
        &self.proj
    }

    pub fn rect(&self) -> &Matrix4<f64> {
        &self.rect
    }

    pub fn lidar_to_cam(&self) -> &Matrix4<f64> {
        &self.lidar_to_cam
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn with_image_size(&self, width: u32, height: u32) -> Result<Self, CalibError> {
        Self::new(self.proj, self.rect, self.lidar_to_cam, width, height)
    }

    /// `rect · lidar_to_cam`: LiDAR frame to rectified camera frame.
    pub fn lidar_to_rect(&self) -> Matrix4<f64> {
        self.rect * self.lidar_to_cam
    }

    pub fn project_point(&self, p: &Point3<f64>) -> PixelPoint {
        let h = self.chain * p.to_homogeneous();
        let depth = h[2];
        if depth != 0.0 {
            PixelPoint {
                u: h[0] / depth,
                v: h[1] / depth,
                depth,
                in_front: depth > 0.0,
            }
        } else {
            PixelPoint {
                u: 0.0,
                v: 0.0,
                depth,
                in_front: false,
            }
        }
    }

    pub fn project_points(&self, pts: &[Point3<f64>]) -> Vec<PixelPoint> {
        pts.iter().map(|p| self.project_point(p)).collect()
    }

    /// Invert the projection chain for a pixel with known depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Result<Point3<f64>, CalibError> {
        let m: Matrix3<f64> = self.chain.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = self.chain.column(3).into_owned();
        let inv = m.try_inverse().ok_or(CalibError::Singular)?;
        let h = Vector3::new(u * depth, v * depth, depth);
        Ok(Point3::from(inv * (h - t)))
    }

    /// Project the eight corners of `b` and return their axis-aligned bounding
    /// rectangle clipped to the image, or `None` when nothing of the box is
    /// visible. Corners behind the camera are ignored.
    pub fn project_box3d_to_aabb2d(&self, b: &Box3D) -> Result<Option<PixelRect>, CalibError> {
        let unclipped = match self.project_box3d_unclipped(b)? {
            Some(r) => r,
            None => return Ok(None),
        };
        let w = self.image_width as f64;
        let h = self.image_height as f64;
        let r = PixelRect {
            u1: unclipped.u1.clamp(0.0, w),
            u2: unclipped.u2.clamp(0.0, w),
            v1: unclipped.v1.clamp(0.0, h),
            v2: unclipped.v2.clamp(0.0, h),
        };
        if r.area() <= 0.0 {
            return Ok(None);
        }
        Ok(Some(r))
    }

    /// Bounding rectangle of the in-front corners before clipping.
    pub fn project_box3d_unclipped(&self, b: &Box3D) -> Result<Option<PixelRect>, CalibError> {
        if !b.has_positive_dims() {
            return Err(CalibError::NonPositiveDims);
        }
        let mut rect: Option<PixelRect> = None;
        for c in b.corners() {
            let px = self.project_point(&c);
            if !px.in_front {
                continue;
            }
            rect = Some(match rect {
                None => PixelRect {
                    u1: px.u,
                    u2: px.u,
                    v1: px.v,
                    v2: px.v,
                },
                Some(r) => PixelRect {
                    u1: r.u1.min(px.u),
                    u2: r.u2.max(px.u),
                    v1: r.v1.min(px.v),
                    v2: r.v2.max(px.v),
                },
            });
        }
        Ok(rect)
    }

    /// KITTI calibration text with this calibration as `P0..P3`.
    pub fn to_kitti_text(&self) -> String {
        let fmt = |vals: &mut dyn Iterator<Item = f64>| {
            vals.map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
        };
        let proj = fmt(&mut (0..3).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| self.proj[(r, c)]));
        let rect = fmt(&mut (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| self.rect[(r, c)]));
        let tr = fmt(
            &mut (0..3)
                .flat_map(|r| (0..4).map(move |c| (r, c)))
                .map(|(r, c)| self.lidar_to_cam[(r, c)]),
        );
        let mut out = String::new();
        for k in 0..4 {
            out.push_str(&format!("P{k}: {proj}\n"));
        }
        out.push_str(&format!("R0_rect: {rect}\n"));
        out.push_str(&format!("Tr_velo_to_cam: {tr}\n"));
        out
    }
}

fn velo_axes() -> Matrix4<f64> {
    Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        0.0, 0.0, -1.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

pub const KITTI_REFERENCE_CALIB: &str = "\
P0: 7.070493e+02 0.000000e+00 6.040814e+02 0.000000e+00 0.000000e+00 7.070493e+02 1.805066e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P1: 7.070493e+02 0.000000e+00 6.040814e+02 -3.797842e+02 0.000000e+00 7.070493e+02 1.805066e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
P3: 7.215377e+02 0.000000e+00 6.095593e+02 -3.395242e+02 0.000000e+00 7.215377e+02 1.728540e+02 2.199936e+00 0.000000e+00 0.000000e+00 1.000000e+00 2.729905e-03
R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01
Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01
Tr_imu_to_velo: 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 9.998898e-01 -1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 -7.997231e-01
";

/// Parse KITTI calibration text, assuming the KITTI image size.
pub fn parse_calib(text: &str) -> Result<CameraCalib, CalibError> {
    parse_calib_with_size(text, KITTI_IMAGE_WIDTH, KITTI_IMAGE_HEIGHT)
}

pub fn parse_calib_with_size(text: &str, width: u32, height: u32) -> Result<CameraCalib, CalibError> {
    let mut p2: Option<Vec<f64>> = None;
    let mut r0: Option<Vec<f64>> = None;
    let mut tr: Option<Vec<f64>> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        let (slot, expected) = match key.trim() {
            "P2" => (&mut p2, 12),
            "R0_rect" => (&mut r0, 9),
            "Tr_velo_to_cam" => (&mut tr, 12),
            _ => continue,
        };
        let mut vals = Vec::with_capacity(expected);
        for (col, tok) in rest.split_whitespace().enumerate() {
            let x: f64 = tok.parse().map_err(|_| CalibError::MalformedFloat {
                line: lineno + 1,
                column: col + 1,
            })?;
            vals.push(x);
        }
        if vals.len() != expected {
            return Err(CalibError::WrongCount {
                key: key.trim().to_string(),
                expected,
                got: vals.len(),
            });
        }
        *slot = Some(vals);
    }

    let p2 = p2.ok_or_else(|| CalibError::MissingKey("P2".into()))?;
    let r0 = r0.ok_or_else(|| CalibError::MissingKey("R0_rect".into()))?;
    let tr = tr.ok_or_else(|| CalibError::MissingKey("Tr_velo_to_cam".into()))?;

    let proj = Matrix3x4::from_row_slice(&p2);
    let mut rect = Matrix4::identity();
    rect.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::from_row_slice(&r0));
    let mut lidar_to_cam = Matrix4::identity();
    lidar_to_cam
        .fixed_view_mut::<3, 4>(0, 0)
        .copy_from(&Matrix3x4::from_row_slice(&tr));
    CameraCalib::new(proj, rect, lidar_to_cam, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    const IDENTITY_CALIB: &str = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";

    #[test]
    fn identity_chain_parses() {
        let c = parse_calib(IDENTITY_CALIB).unwrap();
        assert_eq!(c.proj().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.rect()[(3, 3)], 1.0);
        assert_eq!(*c.lidar_to_cam(), Matrix4::identity());
    }

    #[test]
    fn missing_rect_is_reported() {
        let text = "P2: 1 0 0 0 0 1 0 0 0 0 1 0\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
        assert_eq!(parse_calib(text), Err(CalibError::MissingKey("R0_rect".into())));
    }

    #[test]
    fn malformed_and_short_lines() {
        let bad = IDENTITY_CALIB.replace("R0_rect: 1 0 0", "R0_rect: 1 x 0");
        assert_eq!(
            parse_calib(&bad),
            Err(CalibError::MalformedFloat { line: 2, column: 2 })
        );
        let short = IDENTITY_CALIB.replace("P2: 1 0 0 0 ", "P2: 1 0 0 ");
        assert_eq!(
            parse_calib(&short),
            Err(CalibError::WrongCount {
                key: "P2".into(),
                expected: 12,
                got: 11
            })
        );
    }

    #[test]
    fn crlf_and_unknown_keys_are_tolerated() {
        let text = format!("calib_time: 09-Jan-2012\r\n{}", IDENTITY_CALIB.replace('\n', "\r\n"));
        assert!(parse_calib(&text).is_ok());
    }

    #[test]
    fn reference_calibration_reads_focal_length() {
        let c = CameraCalib::kitti_reference();
        assert_eq!(c.proj()[(0, 0)], 721.5377);
        assert_eq!(c.proj()[(1, 2)], 172.854);
        assert_eq!(c.lidar_to_cam()[(2, 3)], -0.2717806);
    }

    #[test]
    fn non_orthonormal_rotation_is_rejected() {
        let text = IDENTITY_CALIB.replace("Tr_velo_to_cam: 1 0", "Tr_velo_to_cam: 1.01 0");
        assert!(matches!(parse_calib(&text), Err(CalibError::Invalid(_))));
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let c = CameraCalib::pinhole_identity(1.0, 0.0, 0.0, 10, 10);
        let px = c.project_point(&Point3::new(0.0, 0.0, 5.0));
        assert_eq!((px.u, px.v, px.depth, px.in_front), (0.0, 0.0, 5.0, true));
    }

    #[test]
    fn behind_and_on_plane_points_are_flagged() {
        let c = CameraCalib::pinhole_identity(1.0, 0.0, 0.0, 10, 10);
        assert!(!c.project_point(&Point3::new(0.0, 0.0, -2.0)).in_front);
        let on_plane = c.project_point(&Point3::new(1.0, 1.0, 0.0));
        assert!(!on_plane.in_front);
        assert_eq!((on_plane.u, on_plane.v), (0.0, 0.0));
    }

    #[test]
    fn pinhole_formula() {
        let c = CameraCalib::pinhole_identity(100.0, 50.0, 40.0, 200, 200);
        let px = c.project_point(&Point3::new(1.0, 2.0, 10.0));
        assert_relative_eq!(px.u, 60.0, epsilon = 1e-12);
        assert_relative_eq!(px.v, 60.0, epsilon = 1e-12);
        assert_eq!(px.depth, 10.0);
    }

    #[test]
    fn cube_on_axis_projects_symmetrically() {
        let c = CameraCalib::pinhole_identity(100.0, 50.0, 50.0, 100, 100);
        let b = Box3D::new(Point3::new(0.0, 0.0, 10.0), Vector3::new(1.0, 1.0, 1.0), 0.0);
        let r = c.project_box3d_to_aabb2d(&b).unwrap().unwrap();
        let half = 100.0 * 0.5 / 9.5;
        assert_relative_eq!(r.u1, 50.0 - half, epsilon = 1e-9);
        assert_relative_eq!(r.u2, 50.0 + half, epsilon = 1e-9);
        assert_relative_eq!(r.v1, 50.0 - half, epsilon = 1e-9);
        assert_relative_eq!(r.v2, 50.0 + half, epsilon = 1e-9);
        assert_relative_eq!(r.u1, 44.736_842_105, epsilon = 1e-6);
    }

    #[test]
    fn box_behind_camera_is_not_visible() {
        let c = CameraCalib::pinhole_identity(100.0, 50.0, 50.0, 100, 100);
        let b = Box3D::new(Point3::new(0.0, 0.0, -10.0), Vector3::new(1.0, 1.0, 1.0), 0.0);
        assert_eq!(c.project_box3d_to_aabb2d(&b).unwrap(), None);
    }

    #[test]
    fn box_outside_image_is_not_visible() {
        let c = CameraCalib::pinhole_identity(100.0, 50.0, 50.0, 100, 100);
        let b = Box3D::new(Point3::new(50.0, 0.0, 10.0), Vector3::new(1.0, 1.0, 1.0), 0.0);
        assert_eq!(c.project_box3d_to_aabb2d(&b).unwrap(), None);
    }

    #[test]
    fn degenerate_box_is_an_error() {
        let c = CameraCalib::pinhole_identity(100.0, 50.0, 50.0, 100, 100);
        let b = Box3D::new(Point3::new(0.0, 0.0, 10.0), Vector3::new(1.0, 0.0, 1.0), 0.0);
        assert_eq!(c.project_box3d_to_aabb2d(&b), Err(CalibError::NonPositiveDims));
    }

    #[test]
    fn straddling_box_uses_front_corners_and_clips() {
        let c = CameraCalib::pinhole_identity(100.0, 50.0, 50.0, 100, 100);
        let b = Box3D::new(Point3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 2.0, 4.0), 0.0);
        let r = c.project_box3d_to_aabb2d(&b).unwrap().unwrap();
        assert_eq!((r.u1, r.v1, r.u2, r.v2), (0.0, 0.0, 100.0, 100.0));
    }

    #[test]
    fn back_projection_inverts_reference_chain() {
        let c = CameraCalib::kitti_reference();
        let p = Point3::new(12.0, -3.0, 0.5);
        let px = c.project_point(&p);
        let q = c.back_project(px.u, px.v, px.depth).unwrap();
        assert_relative_eq!(p, q, max_relative = 1e-9);
    }

    #[test]
    fn kitti_text_round_trip() {
        let c = CameraCalib::kitti_reference();
        let again = parse_calib(&c.to_kitti_text()).unwrap();
        assert_eq!(c, again);
    }
}
