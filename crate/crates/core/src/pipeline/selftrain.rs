//! Seed training followed by `rounds` relabel-and-retrain iterations, with
//! every artifact persisted so an interrupted run can resume.
//!
//! Layout of the output directory:
//!
//! ```text
//! config.txt            resolved configuration
//! resume_hash           identity checked on resume
//! reports.json          RoundReport list, rewritten after each round
//! metrics.json          per-round AP table
//! round_XX/pseudo.jsonl training labels of round XX, one line per scene
//! round_XX/model.ckpt   trained parameters
//! round_XX/train_log.jsonl
//! round_XX/report.json  written last; marks the round complete
//! round_XX/timing.json  wall time (kept out of reports.json)
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{SeedSource, TrainConfig};
use super::infer::{evaluate, infer_pseudo_boxes, mean_uncertainty};
use super::train::{train_round, TrainSummary};
use crate::error::{Error, Result};
use crate::eval::{match_detections, Detections, MetricsTable, BUCKET_NAMES};
use crate::geometry::{bev_iou, Box7};
use crate::nnet::{load_checkpoint, save_checkpoint, ModelParams};
use crate::pseudolabel::generate_seeds;
use crate::scenegen::{coordinate_errors, read_jsonl, write_jsonl, Dataset, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelQuality {
    pub count: usize,
    /// Pseudo boxes matched one-to-one to a gt at the evaluation IoU.
    pub matched: usize,
    pub recall: Option<f64>,
    /// Mean absolute coordinate error of matched pseudo boxes.
    pub mean_error: Option<[f64; 7]>,
}

/// Compares per-scene labels with the scenes' ground truth.
pub fn pseudo_label_quality(
    scenes: &[Scene],
    labels: &[Vec<Box7>],
    iou: f64,
) -> PseudoLabelQuality {
    let (mut count, mut matched, mut gts) = (0, 0, 0);
    let mut sum = [0.0; 7];
    for (s, l) in scenes.iter().zip(labels) {
        let dets = Detections {
            boxes: l.clone(),
            scores: vec![1.0; l.len()],
        };
        let m = match_detections(&dets, &s.gt_boxes, bev_iou, iou);
        count += l.len();
        gts += s.gt_boxes.len();
        for (d, g) in m.matched_gt.iter().enumerate() {
            if let Some(g) = *g {
                matched += 1;
                let e = coordinate_errors(&l[d], &s.gt_boxes[g]);
                sum.iter_mut().zip(e).for_each(|(a, b)| *a += b);
            }
        }
    }
    PseudoLabelQuality {
        count,
        matched,
        recall: (gts > 0).then(|| matched as f64 / gts as f64),
        mean_error: (matched > 0).then(|| sum.map(|v| v / matched as f64)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub metrics: MetricsTable,
    pub pseudo_labels: PseudoLabelQuality,
    /// Mean learned uncertainty per coordinate on the training foreground.
    pub mean_uncertainty: [f64; 7],
    pub train: TrainSummary,
    /// Seconds; not serialized so reports stay reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_s: f64,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("rename to {}", path.display()), e))
}

fn write_labels(path: &Path, labels: &[Vec<Box7>]) -> Result<()> {
    let tmp = path.with_extension("partial");
    write_jsonl(&tmp, labels)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("rename to {}", path.display()), e))
}

pub fn round_dir(out: &Path, round: usize) -> PathBuf {
    out.join(format!("round_{round:02}"))
}

pub const REPORTS_FILE: &str = "reports.json";
pub const METRICS_FILE: &str = "metrics.json";

fn metrics_document(reports: &[RoundReport]) -> serde_json::Value {
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", 100.0 * x));
    let rounds: Vec<_> = reports
        .iter()
        .map(|r| {
            let cells: serde_json::Map<String, serde_json::Value> = BUCKET_NAMES
                .iter()
                .filter_map(|name| r.metrics.get(name))
                .map(|b| {
                    (
                        b.bucket.clone(),
                        json!(format!("{}/{}", cell(b.ap_bev), cell(b.ap_3d))),
                    )
                })
                .collect();
            json!({ "round": r.round, "ap_bev/ap_3d": cells, "table": r.metrics })
        })
        .collect();
    json!({
        "header": {
            "ap": "all-point interpolation over the precision envelope; recall denominated by gts in bucket",
            "matching": "greedy by descending score (ties by index), highest-IoU unmatched gt at or above the IoU threshold (ties by gt index)",
            "buckets": "by gt BEV range; unmatched detections by their own range; 0-80m pools everything",
        },
        "rounds": rounds,
    })
}

fn with_labels(scenes: &[Scene], labels: &[Vec<Box7>]) -> Vec<Scene> {
    scenes
        .iter()
        .zip(labels)
        .map(|(s, l)| Scene {
            pseudo_boxes: l.clone(),
            ..s.clone()
        })
        .collect()
}

/// Round-0 labels for `scenes`.
pub fn seed_labels(cfg: &TrainConfig, scenes: &[Scene]) -> Result<Vec<Vec<Box7>>> {
    match cfg.seed_source {
        SeedSource::Cluster => scenes
            .iter()
            .map(|s| generate_seeds(s, &cfg.cluster_params()))
            .collect(),
        SeedSource::Dataset => Ok(scenes.iter().map(|s| s.pseudo_boxes.clone()).collect()),
    }
}

/// Runs (or resumes) self-training into `out` and returns one report per
/// round, `cfg.rounds + 1` in total.
pub fn self_train(cfg: &TrainConfig, dataset: &Dataset, out: &Path) -> Result<Vec<RoundReport>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("create {}", out.display()), e))?;
    let hash_path = out.join("resume_hash");
    let hash = cfg.resume_hash();
    if hash_path.exists() {
        let found = std::fs::read_to_string(&hash_path)
            .map_err(|e| Error::io(format!("read {}", hash_path.display()), e))?;
        if found.trim() != hash {
            return Err(Error::ResumeMismatch {
                dir: out.to_path_buf(),
                expected: hash,
                found: found.trim().to_string(),
            });
        }
    } else {
        write_atomic(&hash_path, hash.as_bytes())?;
    }
    write_atomic(&out.join("config.txt"), cfg.to_kv_text().as_bytes())?;

    let train = dataset.train()?;
    let test = dataset.test()?;
    let model_cfg = cfg.model_config();
    let mut reports: Vec<RoundReport> = Vec::new();
    let mut prev: Option<ModelParams> = None;

    for round in 0..=cfg.rounds {
        let dir = round_dir(out, round);
        std::fs::create_dir_all(&dir)
            .map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        let pseudo_path = dir.join("pseudo.jsonl");
        let labels: Vec<Vec<Box7>> = if pseudo_path.exists() {
            read_jsonl(&pseudo_path)?
        } else {
            let labels = match &prev {
                None => seed_labels(cfg, &train)?,
                Some(params) => train
                    .iter()
                    .map(|s| infer_pseudo_boxes(params, s, cfg.score_threshold, cfg.nms_iou))
                    .collect::<Result<_>>()?,
            };
            write_labels(&pseudo_path, &labels)?;
            labels
        };
        if labels.len() != train.len() {
            return Err(Error::InvalidConfig(format!(
                "{} has {} scenes, dataset has {}",
                pseudo_path.display(),
                labels.len(),
                train.len()
            )));
        }

        let report_path = dir.join("report.json");
        let ckpt_path = dir.join("model.ckpt");
        if report_path.exists() && ckpt_path.exists() {
            let text = std::fs::read_to_string(&report_path)
                .map_err(|e| Error::io(format!("read {}", report_path.display()), e))?;
            reports.push(serde_json::from_str(&text)?);
            prev = Some(load_checkpoint(&ckpt_path, Some(&model_cfg))?);
            continue;
        }

        let started = Instant::now();
        let scenes = with_labels(&train, &labels);
        let init = match (&prev, cfg.warm_start) {
            (Some(p), true) => p.clone(),
            _ => ModelParams::init(&model_cfg, cfg.seed.wrapping_add(round as u64))?,
        };
        let log_path = dir.join("train_log.jsonl");
        let log_file = File::create(&log_path)
            .map_err(|e| Error::io(format!("create {}", log_path.display()), e))?;
        let mut log = BufWriter::new(log_file);
        let (params, summary) = train_round(cfg, &scenes, init, round, Some(&mut log))?;
        drop(log);
        save_checkpoint(&params, &ckpt_path)?;

        let report = RoundReport {
            round,
            metrics: evaluate(
                &params,
                &test,
                cfg.eval_score_threshold,
                cfg.nms_iou,
                cfg.eval_iou,
            )?,
            pseudo_labels: pseudo_label_quality(&train, &labels, cfg.eval_iou),
            mean_uncertainty: mean_uncertainty(&params, &scenes)?,
            train: summary,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        write_atomic(
            &dir.join("timing.json"),
            json!({ "wall_time_s": report.wall_time_s })
                .to_string()
                .as_bytes(),
        )?;
        write_atomic(
            &report_path,
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        reports.push(report);
        prev = Some(params);
        write_atomic(
            &out.join(REPORTS_FILE),
            serde_json::to_string_pretty(&reports)?.as_bytes(),
        )?;
        write_atomic(
            &out.join(METRICS_FILE),
            serde_json::to_string_pretty(&metrics_document(&reports))?.as_bytes(),
        )?;
    }
    write_atomic(
        &out.join(REPORTS_FILE),
        serde_json::to_string_pretty(&reports)?.as_bytes(),
    )?;
    write_atomic(
        &out.join(METRICS_FILE),
        serde_json::to_string_pretty(&metrics_document(&reports))?.as_bytes(),
    )?;
    Ok(reports)
}
