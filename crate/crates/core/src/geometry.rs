//! 7-DoF box algebra.
//!
//! Boxes are yaw-only: a center `(x, y, z)`, extents `(l, w, h)` and a heading
//! `theta` about +z. `l` runs along the heading axis. All overlap measures are
//! computed on the bird's-eye-view (BEV) footprint by exact convex clipping,
//! with the vertical overlap folded in for [`iou_3d`].

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used by containment tests so that points lying exactly on a face,
/// after a rotation round-trip, still count as inside.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

/// A 3D box with yaw. Serialized as a flat `[x, y, z, l, w, h, theta]` array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct Box7 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl Box7 {
    /// Builds a validated box; `theta` is wrapped into `[-pi, pi)`.
    pub fn new(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, theta: f64) -> Result<Self> {
        let b = Box7 {
            x,
            y,
            z,
            l,
            w,
            h,
            theta: wrap_angle(theta),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(a: [f64; 7]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.l, self.w, self.h, self.theta]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox(format!("non-finite field in {a:?}")));
        }
        if !(self.l > 0.0 && self.w > 0.0 && self.h > 0.0) {
            return Err(Error::InvalidBox(format!(
                "non-positive size l={} w={} h={}",
                self.l, self.w, self.h
            )));
        }
        if !(-PI..PI).contains(&self.theta) {
            return Err(Error::InvalidBox(format!(
                "theta {} not wrapped",
                self.theta
            )));
        }
        Ok(())
    }

    /// BEV distance of the center from the sensor origin.
    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn volume(&self) -> f64 {
        self.l * self.w * self.h
    }

    pub fn bev_area(&self) -> f64 {
        self.l * self.w
    }

    fn z_range(&self) -> (f64, f64) {
        (self.z - 0.5 * self.h, self.z + 0.5 * self.h)
    }

    /// Radius of the circle circumscribing the footprint.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.l.hypot(self.w)
    }
}

impl TryFrom<[f64; 7]> for Box7 {
    type Error = Error;

    fn try_from(a: [f64; 7]) -> Result<Self> {
        Box7::from_array(a)
    }
}

impl From<Box7> for [f64; 7] {
    fn from(b: Box7) -> Self {
        b.to_array()
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta - TAU * ((theta + PI) / TAU).floor();
    if t >= PI {
        t -= TAU;
    }
    if t < -PI {
        t += TAU;
    }
    t
}

/// Signed angle difference reduced modulo `pi` into `[-pi/2, pi/2)`.
///
/// A rectangle is unchanged by a half turn, so headings that differ by `pi`
/// describe the same footprint.
pub fn wrap_half_turn(delta: f64) -> f64 {
    let mut d = delta - PI * ((delta + FRAC_PI_2) / PI).floor();
    if d >= FRAC_PI_2 {
        d -= PI;
    }
    if d < -FRAC_PI_2 {
        d += PI;
    }
    d
}

/// `min_k |tp - ta + k*pi|`, always in `[0, pi/2]`.
pub fn wrap_angle_residual(tp: f64, ta: f64) -> f64 {
    wrap_half_turn(tp - ta).abs()
}

/// Footprint of a box: four counterclockwise vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevPolygon {
    pub vertices: [Point2; 4],
}

impl BevPolygon {
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }
}

pub fn box_corners_bev(b: &Box7) -> BevPolygon {
    let (s, c) = b.theta.sin_cos();
    let (hl, hw) = (0.5 * b.l, 0.5 * b.w);
    let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
    // (hl, hw) -> (-hl, hw) -> ... walks counterclockwise in the box frame,
    // and a rotation preserves orientation.
    let mut vertices = [[0.0; 2]; 4];
    for (v, [u, w]) in vertices.iter_mut().zip(local) {
        *v = [b.x + u * c - w * s, b.y + u * s + w * c];
    }
    BevPolygon { vertices }
}

/// Signed shoelace area; positive for counterclockwise polygons.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Intersection of two convex counterclockwise polygons (Sutherland–Hodgman).
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output: Vec<Point2> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn segment_line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom == 0.0 {
        return q;
    }
    let t = dp / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the BEV footprint intersection.
pub fn bev_intersection_area(a: &Box7, b: &Box7) -> f64 {
    let d = (a.x - b.x).hypot(a.y - b.y);
    if d > a.bev_radius() + b.bev_radius() {
        return 0.0;
    }
    let pa = box_corners_bev(a);
    let pb = box_corners_bev(b);
    let inter = clip_convex(&pa.vertices, &pb.vertices);
    polygon_area(&inter).max(0.0)
}

/// Rotated footprint IoU in `[0, 1]`.
pub fn bev_iou(a: &Box7, b: &Box7) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.bev_area() + b.bev_area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Yaw-only 3D IoU: footprint intersection times vertical overlap.
pub fn iou_3d(a: &Box7, b: &Box7) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = (a1.min(b1) - a0.max(b0)).max(0.0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Whether `p` lies inside the box; faces count as inside.
#[inline]
pub fn point_in_box(p: &Point3, b: &Box7) -> bool {
    let (s, c) = b.theta.sin_cos();
    let dx = p[0] - b.x;
    let dy = p[1] - b.y;
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    u.abs() <= 0.5 * b.l + BOUNDARY_TOLERANCE
        && v.abs() <= 0.5 * b.w + BOUNDARY_TOLERANCE
        && (p[2] - b.z).abs() <= 0.5 * b.h + BOUNDARY_TOLERANCE
}

pub fn points_in_box(points: &[Point3], b: &Box7) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| point_in_box(p, b))
        .map(|(i, _)| i)
        .collect()
}

/// Expresses a world point in the box frame (`u` along `l`, `v` along `w`).
pub fn to_box_frame(p: &Point3, b: &Box7) -> Point3 {
    let (s, c) = b.theta.sin_cos();
    let dx = p[0] - b.x;
    let dy = p[1] - b.y;
    [dx * c + dy * s, -dx * s + dy * c, p[2] - b.z]
}

pub fn from_box_frame(q: &Point3, b: &Box7) -> Point3 {
    let (s, c) = b.theta.sin_cos();
    [
        b.x + q[0] * c - q[1] * s,
        b.y + q[0] * s + q[1] * c,
        b.z + q[2],
    ]
}

/// The eight corners of the box in world coordinates.
pub fn box_corners_3d(b: &Box7) -> [Point3; 8] {
    let mut out = [[0.0; 3]; 8];
    let mut k = 0;
    for su in [-0.5, 0.5] {
        for sv in [-0.5, 0.5] {
            for sz in [-0.5, 0.5] {
                out[k] = from_box_frame(&[su * b.l, sv * b.w, sz * b.h], b);
                k += 1;
            }
        }
    }
    out
}
