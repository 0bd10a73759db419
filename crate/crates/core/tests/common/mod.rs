//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use noisybox::eval::{match_detections, Detections};
use noisybox::geometry::{bev_iou, Box7};
use noisybox::pipeline::TrainConfig;
use noisybox::scenegen::{make_split, CorruptionSpec, Dataset, SceneSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// AP by enumerating every score cutoff: each cutoff keeps the detections
/// scoring at or above it and yields one (recall, precision) point; the
/// area sums, over each rise in recall, the rise times the best precision
/// at that recall or beyond.
pub fn brute_force_ap(scored: &[(f64, bool)], num_gt: usize) -> f64 {
    let mut cutoffs: Vec<f64> = scored.iter().map(|s| s.0).collect();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    cutoffs.dedup();
    let curve: Vec<(f64, f64)> = cutoffs
        .iter()
        .map(|&c| {
            let kept: Vec<bool> = scored.iter().filter(|s| s.0 >= c).map(|s| s.1).collect();
            let tp = kept.iter().filter(|&&t| t).count();
            (tp as f64 / num_gt as f64, tp as f64 / kept.len() as f64)
        })
        .collect();
    let mut area = 0.0;
    let mut prev = 0.0;
    for (i, &(r, _)) in curve.iter().enumerate() {
        if r > prev {
            let best = curve[i..].iter().map(|c| c.1).fold(0.0, f64::max);
            area += (r - prev) * best;
            prev = r;
        }
    }
    area
}

/// A random detection instance: up to 4 detections and 1 to 3 gts near one
/// another, with distinct scores.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<(f64, bool)>, usize) {
    let unit = |x: f64, y: f64| Box7::new(x, y, 0.0, 2.0, 2.0, 2.0, 0.0).unwrap();
    let n_gt = rng.random_range(1..=3);
    let n_det = rng.random_range(0..=4);
    let gts: Vec<Box7> = (0..n_gt).map(|i| unit(4.0 * i as f64, 0.0)).collect();
    let boxes: Vec<Box7> = (0..n_det)
        .map(|_| {
            let g = rng.random_range(0..n_gt) as f64;
            unit(
                4.0 * g + rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            )
        })
        .collect();
    let scores: Vec<f64> = (0..n_det).map(|_| rng.random_range(0.0..1.0)).collect();
    let dets = Detections { boxes, scores };
    let m = match_detections(&dets, &gts, bev_iou, 0.25);
    (dets.scores.iter().copied().zip(m.is_tp).collect(), n_gt)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A few small scenes and a tiny model: two self-training rounds run in
/// seconds.
pub fn toy_config(dataset: &Path, output: &Path) -> TrainConfig {
    TrainConfig {
        rounds: 2,
        epochs: 3,
        trunk_widths: vec![16, 16],
        head_hidden: 16,
        points_per_scene: 128,
        batch_size: 2,
        score_threshold: 0.3,
        dataset: dataset.display().to_string(),
        output: output.display().to_string(),
        ..TrainConfig::default()
    }
}

pub fn toy_dataset(dir: &Path) -> Dataset {
    let spec = SceneSpec {
        seed: 5,
        objects_min: 2,
        objects_max: 3,
        radius_max: 40.0,
        ground_points: 200,
        ..SceneSpec::default()
    };
    let corruption = CorruptionSpec {
        fraction: 0.3,
        stds: [0.5, 0.5, 0.5, 0.4, 0.4, 0.4, 0.3],
        seed: 5,
    };
    make_split(&spec, 6, 3, Some(&corruption), dir).unwrap()
}

pub fn inside_bev(b: &Box7, x: f64, y: f64) -> bool {
    let (s, c) = b.theta.sin_cos();
    let (dx, dy) = (x - b.x, y - b.y);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    u.abs() <= 0.5 * b.l && v.abs() <= 0.5 * b.w
}

/// IoU estimated by uniform sampling over the pair's common bounding square.
pub fn monte_carlo_iou(a: &Box7, b: &Box7, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let r = |q: &Box7| 0.5 * q.l.hypot(q.w);
    let x0 = (a.x - r(a)).min(b.x - r(b));
    let x1 = (a.x + r(a)).max(b.x + r(b));
    let y0 = (a.y - r(a)).min(b.y - r(b));
    let y1 = (a.y + r(a)).max(b.y + r(b));
    let (mut ia, mut ib, mut both) = (0usize, 0usize, 0usize);
    for _ in 0..n {
        let x = rng.random_range(x0..x1);
        let y = rng.random_range(y0..y1);
        let (pa, pb) = (inside_bev(a, x, y), inside_bev(b, x, y));
        ia += pa as usize;
        ib += pb as usize;
        both += (pa && pb) as usize;
    }
    let union = ia + ib - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

/// Minimum bounding-rectangle area over every direction spanned by a pair of
/// points; the optimum is attained along some hull edge, which is such a pair.
pub fn exhaustive_min_area(points: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..points.len() {
            let (dx, dy) = (points[j][0] - points[i][0], points[j][1] - points[i][1]);
            let n = dx.hypot(dy);
            if n == 0.0 {
                continue;
            }
            let (c, s) = (dx / n, dy / n);
            let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in points {
                let u = p[0] * c + p[1] * s;
                let v = -p[0] * s + p[1] * c;
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
            best = best.min((u1 - u0) * (v1 - v0));
        }
    }
    best
}

pub fn random_box(rng: &mut ChaCha8Rng, cx: f64, cy: f64, spread: f64) -> Box7 {
    Box7::new(
        cx + rng.random_range(-spread..spread),
        cy + rng.random_range(-spread..spread),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.5..5.0),
        rng.random_range(0.5..3.0),
        rng.random_range(0.5..2.0),
        rng.random_range(-3.2..3.2),
    )
    .unwrap()
}
