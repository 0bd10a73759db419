//! Clustering-based seed boxes: ground removal, DBSCAN, and a minimum-area
//! rotated rectangle fitted to each cluster's BEV hull.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Box7, Point2, Point3};
use crate::scenegen::Scene;

/// DBSCAN label of points that belong to no cluster.
pub const NOISE: i32 = -1;
/// Height given to clusters whose points all share one z value.
pub const MIN_BOX_HEIGHT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub ground_threshold: f64,
    pub eps: f64,
    pub min_pts: usize,
    pub min_cluster_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            ground_threshold: 0.2,
            eps: 1.0,
            min_pts: 3,
            min_cluster_size: 4,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "eps {} must be > 0",
                self.eps
            )));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidConfig("min_pts must be >= 1".into()));
        }
        if !self.ground_threshold.is_finite() {
            return Err(Error::InvalidConfig(
                "ground threshold must be finite".into(),
            ));
        }
        Ok(())
    }
}

pub fn remove_ground(points: &[Point3], threshold: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| p[2] > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Uniform hash grid with cell size `eps` for radius queries.
struct Grid<'a> {
    points: &'a [Point3],
    eps: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Point3], eps: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Grid { points, eps, cells }
    }

    fn key(p: &Point3, eps: f64) -> [i64; 3] {
        [
            (p[0] / eps).floor() as i64,
            (p[1] / eps).floor() as i64,
            (p[2] / eps).floor() as i64,
        ]
    }

    /// Indices within `eps` of point `i` (including `i`), ascending.
    fn region(&self, i: usize) -> Vec<usize> {
        let p = self.points[i];
        let k = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in cell {
                            let q = self.points[j];
                            let d2 = (p[0] - q[0]).powi(2)
                                + (p[1] - q[1]).powi(2)
                                + (p[2] - q[2]).powi(2);
                            if d2 <= eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density-based clustering; labels are `0..k` in discovery order, or [`NOISE`].
///
/// Seeds are visited in index order and clusters expand breadth-first, so the
/// labelling is a deterministic function of the point order.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Vec<i32> {
    const UNVISITED: i32 = i32::MIN;
    let grid = Grid::new(points, eps);
    let mut labels = vec![UNVISITED; points.len()];
    let mut cluster = 0;
    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        let seeds = grid.region(i);
        if seeds.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            let nbrs = grid.region(j);
            if nbrs.len() >= min_pts {
                queue.extend(nbrs);
            }
        }
        cluster += 1;
    }
    labels
}

/// Convex hull (Andrew's monotone chain), counterclockwise, without
/// collinear vertices.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// A rotated rectangle: center, extent along `theta`, extent across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedRect {
    pub center: Point2,
    pub along: f64,
    pub across: f64,
    pub theta: f64,
}

impl RotatedRect {
    pub fn area(&self) -> f64 {
        self.along * self.across
    }
}

/// Bounding rectangle of `points` whose first axis is the unit vector `dir`,
/// with coordinates taken relative to `origin`.
fn oriented_bounds(points: &[Point2], origin: Point2, dir: Point2) -> RotatedRect {
    let (c, s) = (dir[0], dir[1]);
    let (mut u0, mut u1, mut v0, mut v1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        let dx = p[0] - origin[0];
        let dy = p[1] - origin[1];
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (uc, vc) = (0.5 * (u0 + u1), 0.5 * (v0 + v1));
    RotatedRect {
        center: [origin[0] + uc * c - vc * s, origin[1] + uc * s + vc * c],
        along: u1 - u0,
        across: v1 - v0,
        theta: s.atan2(c),
    }
}

/// Minimum-area enclosing rectangle, searched over the hull edge directions.
pub fn min_area_rect(points: &[Point2]) -> Result<RotatedRect> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(Error::DegenerateCluster);
    }
    let origin = hull[0];
    let mut best: Option<RotatedRect> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let norm = dx.hypot(dy);
        if norm == 0.0 {
            continue;
        }
        let r = oriented_bounds(&hull, origin, [dx / norm, dy / norm]);
        if best.is_none_or(|q| r.area() < q.area()) {
            best = Some(r);
        }
    }
    match best {
        Some(r) if r.area() > 0.0 => Ok(r),
        _ => Err(Error::DegenerateCluster),
    }
}

/// Fits a box to a cluster: minimum-area BEV rectangle with `l >= w` and
/// `theta` along the long side; vertical extent from the point z range.
pub fn fit_box7(points: &[Point3]) -> Result<Box7> {
    let bev: Vec<Point2> = points.iter().map(|p| [p[0], p[1]]).collect();
    let rect = min_area_rect(&bev)?;
    let (l, w, theta) = if rect.along >= rect.across {
        (rect.along, rect.across, rect.theta)
    } else {
        (
            rect.across,
            rect.along,
            rect.theta + std::f64::consts::FRAC_PI_2,
        )
    };
    let (zmin, zmax) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p[2]), b.max(p[2]))
        });
    let h = (zmax - zmin).max(MIN_BOX_HEIGHT);
    Box7::new(
        rect.center[0],
        rect.center[1],
        0.5 * (zmin + zmax),
        l,
        w,
        h,
        wrap_angle(theta),
    )
}

/// Ground removal, DBSCAN, and one fitted box per large-enough cluster,
/// sorted by distance from the origin.
pub fn generate_seeds(scene: &Scene, params: &ClusterParams) -> Result<Vec<Box7>> {
    params.validate()?;
    let fg = remove_ground(&scene.points, params.ground_threshold);
    if fg.is_empty() {
        return Ok(Vec::new());
    }
    let fg_points: Vec<Point3> = fg.iter().map(|&i| scene.points[i]).collect();
    let labels = dbscan(&fg_points, params.eps, params.min_pts);
    let k = labels.iter().copied().max().unwrap_or(NOISE);
    let mut clusters: Vec<Vec<Point3>> = vec![Vec::new(); (k + 1).max(0) as usize];
    for (p, &l) in fg_points.iter().zip(&labels) {
        if l >= 0 {
            clusters[l as usize].push(*p);
        }
    }
    let mut boxes: Vec<Box7> = clusters
        .iter()
        .filter(|c| c.len() >= params.min_cluster_size.max(3))
        .filter_map(|c| fit_box7(c).ok())
        .collect();
    boxes.sort_by(|a, b| a.range().total_cmp(&b.range()));
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_removal() {
        let flat = vec![[0.0, 0.0, 0.0]; 5];
        assert!(remove_ground(&flat, 0.2).is_empty());
        let high = vec![[0.0, 0.0, 1.0]; 5];
        assert_eq!(remove_ground(&high, 0.2), vec![0, 1, 2, 3, 4]);
        let mixed = vec![
            [0.0, 0.0, 0.1],
            [0.0, 0.0, 0.5],
            [1.0, 0.0, 0.2],
            [0.0, 1.0, 2.0],
        ];
        assert_eq!(remove_ground(&mixed, 0.2), vec![1, 3]);
    }

    fn blob(cx: f64, cy: f64, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                [
                    cx + 0.2 * a.cos(),
                    cy + 0.2 * a.sin(),
                    0.5 + 0.01 * i as f64,
                ]
            })
            .collect()
    }

    #[test]
    fn dbscan_two_blobs() {
        let mut pts = blob(0.0, 0.0, 10);
        pts.extend(blob(10.0, 0.0, 10));
        let labels = dbscan(&pts, 0.5, 3);
        assert!(labels[..10].iter().all(|&l| l == 0));
        assert!(labels[10..].iter().all(|&l| l == 1));
    }

    #[test]
    fn dbscan_single_cluster_and_noise() {
        let pts = blob(0.0, 0.0, 8);
        assert!(dbscan(&pts, 1.0, 8).iter().all(|&l| l == 0));
        let mut pts = blob(0.0, 0.0, 8);
        pts.push([50.0, 50.0, 1.0]);
        let labels = dbscan(&pts, 1.0, 2);
        assert_eq!(labels[8], NOISE);
    }

    fn grid_points(l: f64, w: f64, theta: f64) -> Vec<Point3> {
        let (s, c) = theta.sin_cos();
        let mut out = Vec::new();
        for i in 0..=8 {
            for j in 0..=4 {
                let u = -0.5 * l + l * i as f64 / 8.0;
                let v = -0.5 * w + w * j as f64 / 4.0;
                out.push([u * c - v * s, u * s + v * c, 0.3 + 0.1 * j as f64]);
            }
        }
        out
    }

    #[test]
    fn fit_axis_aligned_grid() {
        let b = fit_box7(&grid_points(4.0, 2.0, 0.0)).unwrap();
        assert!((b.l - 4.0).abs() < 1e-9 && (b.w - 2.0).abs() < 1e-9);
        assert!(crate::geometry::wrap_angle_residual(b.theta, 0.0) < 1e-9);
        assert!((b.h - 0.4).abs() < 1e-9);
    }

    #[test]
    fn fit_rotated_grid() {
        let t = 30f64.to_radians();
        let b = fit_box7(&grid_points(4.0, 2.0, t)).unwrap();
        assert!((b.l - 4.0).abs() < 1e-6 && (b.w - 2.0).abs() < 1e-6);
        assert!(crate::geometry::wrap_angle_residual(b.theta, t) < 1e-6);
    }

    #[test]
    fn fit_right_triangle() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 1.0]];
        let b = fit_box7(&pts).unwrap();
        // Either the axis-aligned unit square or the rectangle on the
        // hypotenuse; both have area 1.
        assert!((b.l * b.w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_cluster_is_degenerate() {
        let pts: Vec<Point3> = (0..5).map(|i| [i as f64, 2.0 * i as f64, 0.5]).collect();
        assert!(matches!(fit_box7(&pts), Err(Error::DegenerateCluster)));
    }

    #[test]
    fn seeds_of_empty_foreground() {
        let scene = Scene {
            points: vec![[1.0, 1.0, 0.0]; 4],
            prov: vec![-1; 4],
            ..Scene::default()
        };
        assert!(generate_seeds(&scene, &ClusterParams::default())
            .unwrap()
            .is_empty());
    }
}
