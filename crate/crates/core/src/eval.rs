//! Average precision with distance buckets, and rank correlation between
//! estimated uncertainty and label error.

use serde::{Deserialize, Serialize};

use crate::geometry::{bev_iou, iou_3d, Box7};
use crate::uncertainty::COORDINATES;

pub const EVAL_IOU: f64 = 0.25;
/// Bucket edges in meters of BEV range.
pub const BUCKET_EDGES: [f64; 2] = [30.0, 50.0];
pub const BUCKET_NAMES: [&str; 4] = ["0-30m", "30-50m", "50-80m", "0-80m"];
/// Fewer pairs than this make a rank correlation absent.
pub const MIN_CORRELATION_PAIRS: usize = 10;

pub type IouFn = fn(&Box7, &Box7) -> f64;

/// Detections of one scene.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Detections {
    pub boxes: Vec<Box7>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Per detection, in input order.
    pub is_tp: Vec<bool>,
    pub matched_gt: Vec<Option<usize>>,
    /// Best IoU with any gt that was still unmatched when the detection was
    /// processed.
    pub iou: Vec<f64>,
    pub gt_matched: Vec<bool>,
}

/// Greedy matching in descending score order (ties by index). Each detection
/// takes the highest-IoU unmatched gt with IoU at least `threshold`.
pub fn match_detections(
    dets: &Detections,
    gts: &[Box7],
    iou_fn: IouFn,
    threshold: f64,
) -> MatchResult {
    let n = dets.boxes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dets.scores[b].total_cmp(&dets.scores[a]));
    let mut res = MatchResult {
        is_tp: vec![false; n],
        matched_gt: vec![None; n],
        iou: vec![0.0; n],
        gt_matched: vec![false; gts.len()],
    };
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if res.gt_matched[g] {
                continue;
            }
            let iou = iou_fn(&dets.boxes[d], gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            res.iou[d] = iou;
            if iou >= threshold {
                res.is_tp[d] = true;
                res.matched_gt[d] = Some(g);
                res.gt_matched[g] = true;
            }
        }
    }
    res
}

/// All-point interpolated AP of scored TP/FP flags against `num_gt` ground
/// truths. Equal scores keep their input order. `None` when `num_gt == 0`.
pub fn average_precision(scored: &[(f64, bool)], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    // Precision at the rank of each newly recalled gt, then the envelope.
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(scored.len());
    let mut tp_ranks = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if scored[i].1 {
            tp += 1;
            tp_ranks.push(k);
        }
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let g = num_gt as f64;
    let mut ap = 0.0;
    for &k in tp_ranks.iter().take(num_gt) {
        ap += precision[k] / g;
    }
    Some(ap)
}

/// Bucket index of a BEV range: 0 below 30 m, 1 below 50 m, 2 otherwise.
pub fn bucket_of(range: f64) -> usize {
    BUCKET_EDGES.iter().take_while(|&&e| range >= e).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: String,
    pub num_gt: usize,
    pub ap_bev: Option<f64>,
    pub ap_3d: Option<f64>,
    pub recall_bev: Option<f64>,
    pub recall_3d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    /// In [`BUCKET_NAMES`] order; the last entry is the union.
    pub buckets: Vec<BucketMetrics>,
}

impl MetricsTable {
    pub fn overall(&self) -> &BucketMetrics {
        self.buckets.last().expect("four buckets")
    }

    pub fn get(&self, name: &str) -> Option<&BucketMetrics> {
        self.buckets.iter().find(|b| b.bucket == name)
    }
}

/// Per bucket: `(scored detections, num_gt, matched gts)`.
type BucketPool = Vec<(Vec<(f64, bool)>, usize, usize)>;

fn pool_buckets(scenes: &[(Detections, Vec<Box7>)], iou_fn: IouFn, threshold: f64) -> BucketPool {
    let mut pools: BucketPool = vec![(Vec::new(), 0, 0); 4];
    for (dets, gts) in scenes {
        let m = match_detections(dets, gts, iou_fn, threshold);
        for (g, gt) in gts.iter().enumerate() {
            for b in [bucket_of(gt.range()), 3] {
                pools[b].1 += 1;
                pools[b].2 += m.gt_matched[g] as usize;
            }
        }
        for d in 0..dets.boxes.len() {
            let range = match m.matched_gt[d] {
                Some(g) => gts[g].range(),
                None => dets.boxes[d].range(),
            };
            for b in [bucket_of(range), 3] {
                pools[b].0.push((dets.scores[d], m.is_tp[d]));
            }
        }
    }
    pools
}

/// AP_BEV and AP_3D per distance bucket over a set of scenes, each given as
/// `(detections, ground truth)`. Buckets are keyed by gt range; a detection
/// goes to its matched gt's bucket, or to its own range's bucket when
/// unmatched. The last bucket pools everything.
pub fn bucketed_metrics(scenes: &[(Detections, Vec<Box7>)], threshold: f64) -> MetricsTable {
    let bev = pool_buckets(scenes, bev_iou, threshold);
    let d3 = pool_buckets(scenes, iou_3d, threshold);
    let recall = |matched: usize, n: usize| (n > 0).then(|| matched as f64 / n as f64);
    let buckets = (0..4)
        .map(|b| BucketMetrics {
            bucket: BUCKET_NAMES[b].to_string(),
            num_gt: bev[b].1,
            ap_bev: average_precision(&bev[b].0, bev[b].1),
            ap_3d: average_precision(&d3[b].0, d3[b].1),
            recall_bev: recall(bev[b].2, bev[b].1),
            recall_3d: recall(d3[b].2, d3[b].1),
        })
        .collect();
    MetricsTable { buckets }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` with fewer than
/// [`MIN_CORRELATION_PAIRS`] pairs or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples");
    if x.len() < MIN_CORRELATION_PAIRS {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: [Option<f64>; COORDINATES],
    pub samples: usize,
}

/// Per-coordinate Spearman correlation between `|error|` and uncertainty.
pub fn uncertainty_error_correlation(u: &[[f64; 7]], errors: &[[f64; 7]]) -> CorrelationReport {
    assert_eq!(u.len(), errors.len(), "paired samples");
    let mut rho = [None; COORDINATES];
    for (i, r) in rho.iter_mut().enumerate() {
        let x: Vec<f64> = errors.iter().map(|e| e[i].abs()).collect();
        let y: Vec<f64> = u.iter().map(|v| v[i]).collect();
        *r = spearman(&x, &y);
    }
    CorrelationReport {
        rho,
        samples: u.len(),
    }
}
