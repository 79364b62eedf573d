//! Oriented 3D boxes and convex polygon clipping in the ground plane.

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

/// A single LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LidarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl LidarPoint {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.x as f64, self.y as f64, self.z as f64)
    }
}

pub type PointCloud = Vec<LidarPoint>;

/// Oriented box in the LiDAR frame.
///
/// `size` is `(length, width, height)`: length runs along the heading, height
/// along the vertical Z axis. `yaw` is the heading angle about +Z in radians,
/// measured from +X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Point3<f64>,
    pub size: Vector3<f64>,
    pub yaw: f64,
}

impl Box3D {
    pub fn new(center: Point3<f64>, size: Vector3<f64>, yaw: f64) -> Self {
        Self { center, size, yaw }
    }

    pub fn has_positive_dims(&self) -> bool {
        self.size.iter().all(|&d| d > 0.0 && d.is_finite())
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn bev_area(&self) -> f64 {
        self.size.x * self.size.y
    }

    pub fn z_min(&self) -> f64 {
        self.center.z - 0.5 * self.size.z
    }

    pub fn z_max(&self) -> f64 {
        self.center.z + 0.5 * self.size.z
    }

    /// Distance of the center from the sensor origin in the ground plane.
    pub fn bev_range(&self) -> f64 {
        self.center.x.hypot(self.center.y)
    }

    /// Map a point from the box's local frame (origin at the center, +X along
    /// the heading) into the LiDAR frame.
    pub fn local_to_world(&self, local: &Point3<f64>) -> Point3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Point3::new(
            self.center.x + c * local.x - s * local.y,
            self.center.y + s * local.x + c * local.y,
            self.center.z + local.z,
        )
    }

    pub fn world_to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center;
        Point3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// The eight corners; bottom face first, each face counter-clockwise seen
    /// from above.
    pub fn corners(&self) -> [Point3<f64>; 8] {
        let h = self.size * 0.5;
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let mut out = [Point3::origin(); 8];
        for (k, &(sx, sy)) in signs.iter().enumerate() {
            out[k] = self.local_to_world(&Point3::new(sx * h.x, sy * h.y, -h.z));
            out[k + 4] = self.local_to_world(&Point3::new(sx * h.x, sy * h.y, h.z));
        }
        out
    }

    /// Ground-plane footprint, counter-clockwise.
    pub fn bev_polygon(&self) -> Vec<Point2<f64>> {
        let h = self.size * 0.5;
        let (s, c) = self.yaw.sin_cos();
        [(1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|&(sx, sy)| {
                let (lx, ly) = (sx * h.x, sy * h.y);
                Point2::new(
                    self.center.x + c * lx - s * ly,
                    self.center.y + s * lx + c * ly,
                )
            })
            .collect()
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let l = self.world_to_local(p);
        let h = self.size * 0.5;
        l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
    }

    pub fn contains_bev(&self, x: f64, y: f64) -> bool {
        let l = self.world_to_local(&Point3::new(x, y, self.center.z));
        l.x.abs() <= 0.5 * self.size.x && l.y.abs() <= 0.5 * self.size.y
    }
}

/// Signed area (positive for counter-clockwise polygons).
pub fn polygon_area(poly: &[Point2<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn line_intersection(
    s: &Point2<f64>,
    e: &Point2<f64>,
    a: &Point2<f64>,
    b: &Point2<f64>,
) -> Point2<f64> {
    // s + t (e - s) on the line through a, b
    let ds = cross(a, b, s);
    let de = cross(a, b, e);
    let t = ds / (ds - de);
    Point2::new(s.x + t * (e.x - s.x), s.y + t * (e.y - s.y))
}

/// Sutherland-Hodgman clip of `subject` against the convex, counter-clockwise
/// polygon `clip`. The result may be empty.
pub fn clip_convex(subject: &[Point2<f64>], clip: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut output: Vec<Point2<f64>> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(&a, &b, &cur) >= 0.0;
            let prev_in = cross(&a, &b, &prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(&prev, &cur, &a, &b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(&prev, &cur, &a, &b));
            }
        }
    }
    output
}

/// Area of the intersection of two convex counter-clockwise polygons.
pub fn convex_intersection_area(a: &[Point2<f64>], b: &[Point2<f64>]) -> f64 {
    polygon_area(&clip_convex(a, b)).max(0.0)
}
