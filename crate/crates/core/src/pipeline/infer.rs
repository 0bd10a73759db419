//! Primary-branch inference, NMS aggregation and per-box diagnostics.

use crate::error::Result;
use crate::eval::{bucketed_metrics, Detections, MetricsTable};
use crate::geometry::{bev_iou, Box7};
use crate::nnet::{forward_dense, forward_primary, ModelParams};
use crate::scenegen::Scene;
use crate::uncertainty::{assign_targets_to, estimate_uncertainty, COORDINATES};

/// Greedy score-descending suppression by BEV IoU; equal scores keep index
/// order. Returns the kept indices in selection order.
pub fn nms_indices(boxes: &[Box7], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| bev_iou(&boxes[k], &boxes[i]) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept
}

pub fn nms_aggregate(boxes: &[Box7], scores: &[f64], iou_threshold: f64) -> Vec<Box7> {
    nms_indices(boxes, scores, iou_threshold)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// Per-point primary boxes with objectness at least `score_threshold`,
/// collapsed by NMS. The auxiliary branch is never evaluated.
pub fn infer_detections(
    params: &ModelParams,
    scene: &Scene,
    score_threshold: f64,
    nms_iou: f64,
) -> Result<Detections> {
    if scene.is_empty() {
        return Ok(Detections::default());
    }
    let pred = forward_primary(params, &scene.points)?;
    let mut boxes = Vec::new();
    let mut scores = Vec::new();
    for j in 0..pred.len() {
        if pred.objectness[j] >= score_threshold {
            if let Ok(b) = Box7::from_array(pred.row(j)) {
                boxes.push(b);
                scores.push(pred.objectness[j]);
            }
        }
    }
    let kept = nms_indices(&boxes, &scores, nms_iou);
    Ok(Detections {
        boxes: kept.iter().map(|&i| boxes[i]).collect(),
        scores: kept.iter().map(|&i| scores[i]).collect(),
    })
}

pub fn infer_pseudo_boxes(
    params: &ModelParams,
    scene: &Scene,
    score_threshold: f64,
    nms_iou: f64,
) -> Result<Vec<Box7>> {
    Ok(infer_detections(params, scene, score_threshold, nms_iou)?.boxes)
}

/// Metrics of primary-branch detections against the scenes' ground truth.
pub fn evaluate(
    params: &ModelParams,
    scenes: &[Scene],
    score_threshold: f64,
    nms_iou: f64,
    iou_threshold: f64,
) -> Result<MetricsTable> {
    let pairs = scenes
        .iter()
        .map(|s| {
            Ok((
                infer_detections(params, s, score_threshold, nms_iou)?,
                s.gt_boxes.clone(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(bucketed_metrics(&pairs, iou_threshold))
}

/// Learned uncertainty of each box: the per-point field averaged over the
/// points assigned to it. `None` for boxes without assigned points.
pub fn box_uncertainties(
    params: &ModelParams,
    scene: &Scene,
    boxes: &[Box7],
) -> Result<Vec<Option<[f64; 7]>>> {
    if scene.is_empty() {
        return Ok(vec![None; boxes.len()]);
    }
    let (p, a, _) = forward_dense(params, &scene.points)?;
    let field = estimate_uncertainty(&p, &a)?;
    let targets = assign_targets_to(&scene.points, boxes);
    let mut sums = vec![[0.0; COORDINATES]; boxes.len()];
    let mut counts = vec![0usize; boxes.len()];
    for (j, k) in targets.assigned.iter().enumerate() {
        if let Some(k) = *k {
            counts[k] += 1;
            for i in 0..COORDINATES {
                sums[k][i] += field.values[[j, i]];
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s.map(|v| v / c as f64)))
        .collect())
}

/// Mean learned uncertainty per coordinate over the foreground points of
/// `scenes` (points assigned to a pseudo box).
pub fn mean_uncertainty(params: &ModelParams, scenes: &[Scene]) -> Result<[f64; 7]> {
    let mut sum = [0.0; COORDINATES];
    let mut count = 0usize;
    for s in scenes.iter().filter(|s| !s.is_empty()) {
        let (p, a, _) = forward_dense(params, &s.points)?;
        let field = estimate_uncertainty(&p, &a)?;
        let targets = assign_targets_to(&s.points, &s.pseudo_boxes);
        for j in targets.foreground() {
            count += 1;
            for i in 0..COORDINATES {
                sum[i] += field.values[[j, i]];
            }
        }
    }
    Ok(sum.map(|v| if count > 0 { v / count as f64 } else { 0.0 }))
}
