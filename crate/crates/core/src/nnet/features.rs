//! Fixed (non-learned) per-point input encoding.
//!
//! A point on its own does not say where the object it belongs to is
//! centered or how it is oriented. Besides the raw coordinates, each
//! foreground point is described by the statistics of its foreground
//! neighbourhood at a few BEV radii: offset to the local centroid, the 2D
//! covariance in doubled-angle form, and a log point count.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Scaled `(x, y, z)` only.
    Xyz,
    /// Coordinates plus multi-radius neighbourhood statistics.
    Neighborhood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// Divides x and y before they enter the network.
    pub coord_scale: f64,
    pub ground_threshold: f64,
    pub radii: Vec<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kind: FeatureKind::Neighborhood,
            coord_scale: 40.0,
            ground_threshold: 0.2,
            radii: vec![1.5, 4.0],
        }
    }
}

const PER_RADIUS: usize = 7;

impl FeatureConfig {
    pub fn dim(&self) -> usize {
        match self.kind {
            FeatureKind::Xyz => 3,
            FeatureKind::Neighborhood => 6 + PER_RADIUS * self.radii.len(),
        }
    }
}

struct BevGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl BevGrid {
    fn new(points: &[Point3], members: &[usize], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for &i in members {
            let p = points[i];
            cells
                .entry(((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        BevGrid { cell, cells }
    }

    fn for_each_within(&self, points: &[Point3], p: &Point3, r: f64, mut f: impl FnMut(usize)) {
        let (cx, cy) = (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
        );
        let reach = (r / self.cell).ceil() as i64;
        let r2 = r * r;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(cell) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &j in cell {
                        let q = points[j];
                        if (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) <= r2 {
                            f(j);
                        }
                    }
                }
            }
        }
    }
}

/// Encodes every point into a `n x cfg.dim()` feature matrix.
///
/// The encoding depends only on the point set, so duplicated points receive
/// identical rows.
pub fn encode_points(points: &[Point3], cfg: &FeatureConfig) -> Array2<f64> {
    let n = points.len();
    let mut out = Array2::<f64>::zeros((n, cfg.dim()));
    let s = cfg.coord_scale;
    for (i, p) in points.iter().enumerate() {
        out[[i, 0]] = p[0] / s;
        out[[i, 1]] = p[1] / s;
        out[[i, 2]] = p[2];
    }
    if cfg.kind == FeatureKind::Xyz {
        return out;
    }
    let fg: Vec<usize> = (0..n)
        .filter(|&i| points[i][2] > cfg.ground_threshold)
        .collect();
    let max_r = cfg.radii.iter().copied().fold(0.0, f64::max).max(1e-3);
    let grid = BevGrid::new(points, &fg, max_r);
    for (i, p) in points.iter().enumerate() {
        let r = p[0].hypot(p[1]).max(1e-9);
        out[[i, 4]] = p[0] / r;
        out[[i, 5]] = p[1] / r;
    }
    for &i in &fg {
        let p = points[i];
        out[[i, 3]] = 1.0;
        for (k, &radius) in cfg.radii.iter().enumerate() {
            let (mut cnt, mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0, 0.0);
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            grid.for_each_within(points, &p, radius, |j| {
                let q = points[j];
                // Offsets relative to the query point keep the sums small.
                let (dx, dy, dz) = (q[0] - p[0], q[1] - p[1], q[2] - p[2]);
                cnt += 1.0;
                sx += dx;
                sy += dy;
                sz += dz;
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            });
            let base = 6 + PER_RADIUS * k;
            let (mx, my, mz) = (sx / cnt, sy / cnt, sz / cnt);
            let cxx = sxx / cnt - mx * mx;
            let cxy = sxy / cnt - mx * my;
            let cyy = syy / cnt - my * my;
            out[[i, base]] = mx;
            out[[i, base + 1]] = my;
            out[[i, base + 2]] = mz;
            out[[i, base + 3]] = cxx - cyy;
            out[[i, base + 4]] = 2.0 * cxy;
            out[[i, base + 5]] = cxx + cyy;
            out[[i, base + 6]] = (1.0 + cnt).ln() / 5.0;
        }
    }
    out
}
