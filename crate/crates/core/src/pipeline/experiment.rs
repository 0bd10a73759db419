//! Single-round training experiments on an in-memory corpus, used by the
//! ablation grid.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::infer::{box_uncertainties, evaluate, mean_uncertainty};
use super::selftrain::seed_labels;
use super::train::{train_round, TrainSummary};
use crate::error::Result;
use crate::eval::{uncertainty_error_correlation, CorrelationReport, MetricsTable};
use crate::nnet::ModelParams;
use crate::scenegen::{Corpus, Scene};
use crate::uncertainty::{Granularity, UncertaintyMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub metrics: MetricsTable,
    /// Mean learned uncertainty per coordinate on the training foreground.
    pub mean_uncertainty: [f64; 7],
    /// Rank correlation of per-box uncertainty with the injected label
    /// error; present for corrupted corpora.
    pub correlation: Option<CorrelationReport>,
    pub train: TrainSummary,
}

/// Trains one round from a fresh init on the corpus' training labels and
/// evaluates on its test scenes.
pub fn run_experiment(
    cfg: &TrainConfig,
    corpus: &Corpus,
) -> Result<(ModelParams, ExperimentResult)> {
    let labels = seed_labels(cfg, &corpus.train)?;
    let scenes: Vec<Scene> = corpus
        .train
        .iter()
        .zip(labels)
        .map(|(s, l)| Scene {
            pseudo_boxes: l,
            ..s.clone()
        })
        .collect();
    let init = ModelParams::init(&cfg.model_config(), cfg.seed)?;
    let (params, train) = train_round(cfg, &scenes, init, 0, None)?;
    let metrics = evaluate(
        &params,
        &corpus.test,
        cfg.eval_score_threshold,
        cfg.nms_iou,
        cfg.eval_iou,
    )?;
    let correlation = match &corpus.train_errors {
        Some(errors) => {
            let mut u = Vec::new();
            let mut e = Vec::new();
            for (s, errs) in scenes.iter().zip(errors) {
                for (bu, be) in box_uncertainties(&params, s, &s.pseudo_boxes)?
                    .into_iter()
                    .zip(errs)
                {
                    if let Some(bu) = bu {
                        u.push(bu);
                        e.push(*be);
                    }
                }
            }
            Some(uncertainty_error_correlation(&u, &e))
        }
        None => None,
    };
    let result = ExperimentResult {
        metrics,
        mean_uncertainty: mean_uncertainty(&params, &scenes)?,
        correlation,
        train,
    };
    Ok((params, result))
}

/// Axes of an ablation grid; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub granularity: Vec<Granularity>,
    pub mode: Vec<UncertaintyMode>,
}

/// Cartesian product of the grid applied to `base`, in axis order
/// gamma, lambda, mu, granularity, mode.
pub fn ablation_configs(base: &TrainConfig, grid: &AblationGrid) -> Vec<TrainConfig> {
    fn axis<T: Clone>(v: &[T], base: T) -> Vec<T> {
        if v.is_empty() {
            vec![base]
        } else {
            v.to_vec()
        }
    }
    let mut out = Vec::new();
    for &gamma in &axis(&grid.gamma, base.gamma) {
        for &lambda in &axis(&grid.lambda, base.lambda) {
            for &mu in &axis(&grid.mu, base.mu) {
                for &granularity in &axis(&grid.granularity, base.granularity) {
                    for &mode in &axis(&grid.mode, base.mode) {
                        out.push(TrainConfig {
                            gamma,
                            lambda,
                            mu,
                            granularity,
                            mode,
                            ..base.clone()
                        });
                    }
                }
            }
        }
    }
    out
}
