//! Bird's-eye-view SVG rendering of scenes, boxes and per-coordinate
//! uncertainty glyphs.
//!
//! Glyphs: a yellow reference footprint, a purple footprint grown by
//! `(dl, dw)` at each end, purple segments of `k*dx` (horizontal) and `k*dy`
//! (vertical) pixels from the center, and a purple diagonal of `k*dtheta`
//! pixels. `dz` and `dh` have no BEV glyph.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{box_corners_bev, Box7, Point2};
use crate::scenegen::Scene;

pub const GT_COLOR: &str = "#2ca02c";
pub const PRED_COLOR: &str = "#d62728";
pub const UNCERTAINTY_COLOR: &str = "#9467bd";
pub const REFERENCE_COLOR: &str = "#f2c400";
pub const PSEUDO_COLOR: &str = "#1f77b4";
pub const POINT_COLOR: &str = "#555555";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layers {
    pub points: bool,
    pub gt: bool,
    pub pseudo: bool,
    pub pred: bool,
    pub uncertainty: bool,
}

impl Default for Layers {
    fn default() -> Self {
        Layers {
            points: true,
            gt: true,
            pseudo: false,
            pred: true,
            uncertainty: true,
        }
    }
}

impl Layers {
    /// Parses a comma-separated list such as `gt,pred,uncertainty`.
    pub fn parse(list: &str) -> Option<Self> {
        let mut l = Layers {
            points: false,
            gt: false,
            pseudo: false,
            pred: false,
            uncertainty: false,
        };
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "points" => l.points = true,
                "gt" => l.gt = true,
                "pseudo" => l.pseudo = true,
                "pred" => l.pred = true,
                "uncertainty" => l.uncertainty = true,
                _ => return None,
            }
        }
        Some(l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Half-width of the square canvas in meters, centered on the sensor.
    pub extent: f64,
    /// Pixels per meter.
    pub scale: f64,
    /// Glyph pixels per unit of uncertainty (meters or radians).
    pub glyph_scale: f64,
    pub point_radius: f64,
    pub layers: Layers,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            extent: 80.0,
            scale: 6.0,
            glyph_scale: 40.0,
            point_radius: 0.8,
            layers: Layers::default(),
        }
    }
}

impl RenderSpec {
    pub fn size(&self) -> f64 {
        2.0 * self.extent * self.scale
    }

    /// World BEV coordinates to pixels, with +y pointing up on the canvas.
    pub fn to_pixel(&self, p: Point2) -> Point2 {
        [
            (p[0] + self.extent) * self.scale,
            (self.extent - p[1]) * self.scale,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    X,
    Y,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub from: Point2,
    pub to: Point2,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.to[0] - self.from[0]).hypot(self.to[1] - self.from[1])
    }
}

/// Pixel-space geometry of one uncertainty glyph.
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub reference: [Point2; 4],
    pub expanded: [Point2; 4],
    /// Zero-length segments are omitted.
    pub segments: Vec<Segment>,
}

fn pixel_corners(b: &Box7, spec: &RenderSpec) -> [Point2; 4] {
    box_corners_bev(b).vertices.map(|v| spec.to_pixel(v))
}

pub fn render_uncertainty_glyphs(b: &Box7, u: &[f64; 7], spec: &RenderSpec) -> Glyph {
    let grown = Box7 {
        l: b.l + 2.0 * u[3],
        w: b.w + 2.0 * u[4],
        ..*b
    };
    let c = spec.to_pixel([b.x, b.y]);
    let k = spec.glyph_scale;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let segments = [
        (SegmentKind::X, [k * u[0], 0.0]),
        (SegmentKind::Y, [0.0, -k * u[1]]),
        (SegmentKind::Theta, [k * u[6] * half, -k * u[6] * half]),
    ]
    .into_iter()
    .filter(|(_, d)| d[0] != 0.0 || d[1] != 0.0)
    .map(|(kind, d)| Segment {
        kind,
        from: c,
        to: [c[0] + d[0], c[1] + d[1]],
    })
    .collect();
    Glyph {
        reference: pixel_corners(b, spec),
        expanded: pixel_corners(&grown, spec),
        segments,
    }
}

fn polygon(out: &mut String, pts: &[Point2; 4], stroke: &str, class: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.2},{:.2}", p[0], p[1]))
        .collect();
    let _ = writeln!(
        out,
        r#"<polygon class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
        coords.join(" ")
    );
}

impl Glyph {
    pub fn to_svg(&self) -> String {
        let mut s = String::from("<g class=\"glyph\">\n");
        polygon(&mut s, &self.reference, REFERENCE_COLOR, "reference");
        polygon(&mut s, &self.expanded, UNCERTAINTY_COLOR, "uncertainty");
        for seg in &self.segments {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{UNCERTAINTY_COLOR}" stroke-width="1.5"/>"#,
                seg.from[0], seg.from[1], seg.to[0], seg.to[1]
            );
        }
        s.push_str("</g>\n");
        s
    }
}

/// Boxes and glyphs drawn on top of a scene.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overlay<'a> {
    pub predictions: &'a [Box7],
    /// Box plus its seven uncertainty values.
    pub glyphs: &'a [(Box7, [f64; 7])],
}

fn box_layer(out: &mut String, id: &str, boxes: &[Box7], color: &str, spec: &RenderSpec) {
    let _ = writeln!(out, r#"<g id="{id}">"#);
    for b in boxes {
        polygon(out, &pixel_corners(b, spec), color, "box");
    }
    out.push_str("</g>\n");
}

/// Standalone SVG document; element order follows the input order.
pub fn render_scene(scene: &Scene, overlay: &Overlay<'_>, spec: &RenderSpec) -> String {
    let size = spec.size();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.2} {size:.2}">"#
    );
    let _ = writeln!(
        out,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    if spec.layers.points {
        let _ = writeln!(out, r#"<g id="points" fill="{POINT_COLOR}">"#);
        for p in &scene.points {
            let q = spec.to_pixel([p[0], p[1]]);
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}"/>"#,
                q[0], q[1], spec.point_radius
            );
        }
        out.push_str("</g>\n");
    }
    if spec.layers.gt {
        box_layer(&mut out, "gt", &scene.gt_boxes, GT_COLOR, spec);
    }
    if spec.layers.pseudo {
        box_layer(&mut out, "pseudo", &scene.pseudo_boxes, PSEUDO_COLOR, spec);
    }
    if spec.layers.pred {
        box_layer(&mut out, "pred", overlay.predictions, PRED_COLOR, spec);
    }
    if spec.layers.uncertainty {
        out.push_str("<g id=\"uncertainty\">\n");
        for (b, u) in overlay.glyphs {
            out.push_str(&render_uncertainty_glyphs(b, u, spec).to_svg());
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
