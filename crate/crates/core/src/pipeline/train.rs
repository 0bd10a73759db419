use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nnet::{adam_step, backward, forward_dense, AdamState, ModelParams};
use crate::scenegen::{subsample_points, Augmentation, Scene};
use crate::uncertainty::{
    assign_targets, detection_loss, rule_uncertainty, LossBreakdown, LossInputs,
};

/// One training-log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: usize,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub grad_norm: f64,
    /// Mean over the scenes of the batch.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    /// Mean breakdown over the last epoch; `None` when no step ran.
    pub last_epoch: Option<LossBreakdown>,
}

/// Running mean of breakdowns.
#[derive(Debug, Clone, Default)]
struct BreakdownMean {
    sum: Option<LossBreakdown>,
    count: usize,
}

impl BreakdownMean {
    fn add(&mut self, b: &LossBreakdown) {
        self.count += 1;
        match &mut self.sum {
            None => self.sum = Some(b.clone()),
            Some(s) => {
                for i in 0..7 {
                    s.primary[i] += b.primary[i];
                    s.auxiliary[i] += b.auxiliary[i];
                    s.mean_uncertainty[i] += b.mean_uncertainty[i];
                }
                s.regularized_primary += b.regularized_primary;
                s.regularized_auxiliary += b.regularized_auxiliary;
                s.objectness_primary += b.objectness_primary;
                s.objectness_auxiliary += b.objectness_auxiliary;
                s.total += b.total;
                s.foreground += b.foreground;
            }
        }
    }

    fn mean(&self) -> Option<LossBreakdown> {
        let mut s = self.sum.clone()?;
        let k = self.count as f64;
        for i in 0..7 {
            s.primary[i] /= k;
            s.auxiliary[i] /= k;
            s.mean_uncertainty[i] /= k;
        }
        s.regularized_primary /= k;
        s.regularized_auxiliary /= k;
        s.objectness_primary /= k;
        s.objectness_auxiliary /= k;
        s.total /= k;
        s.foreground /= self.count;
        Some(s)
    }
}

/// Per-box rule scores for the scene's pseudo boxes, if the mode needs them.
pub fn rule_scores(cfg: &TrainConfig, scene: &Scene) -> Option<Vec<f64>> {
    let kind = cfg.mode.rule()?;
    Some(
        scene
            .pseudo_boxes
            .iter()
            .map(|b| rule_uncertainty(b, &scene.points, kind))
            .collect(),
    )
}

/// Loss and parameter gradient of one prepared scene.
pub fn scene_gradient(
    cfg: &TrainConfig,
    params: &ModelParams,
    scene: &Scene,
) -> Result<(LossBreakdown, ModelParams)> {
    let scores = rule_scores(cfg, scene);
    let targets = assign_targets(scene);
    let (p, a, tape) = forward_dense(params, &scene.points)?;
    let out = detection_loss(
        &p,
        &a,
        &targets,
        &cfg.loss_config(),
        LossInputs {
            box_uncertainty: scores.as_deref(),
            frozen_uncertainty: None,
        },
    )?;
    let grads = backward(params, &tape, &out.grad_primary, &out.grad_auxiliary)?;
    Ok((out.breakdown, grads))
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::NumericalOverflow { .. } => Error::NumericalOverflow { step: Some(step) },
        other => other,
    }
}

/// Trains `init` on the pseudo boxes of `scenes` for `cfg.epochs` epochs.
///
/// Each step draws `batch_size` scenes in a per-epoch shuffled order,
/// augments and subsamples them, and averages their gradients. All
/// randomness comes from `cfg.data_seed` and `round`.
pub fn train_round(
    cfg: &TrainConfig,
    scenes: &[Scene],
    init: ModelParams,
    round: usize,
    mut log: Option<&mut dyn Write>,
) -> Result<(ModelParams, TrainSummary)> {
    cfg.validate()?;
    let mut params = init;
    let mut summary = TrainSummary {
        steps: 0,
        last_epoch: None,
    };
    if cfg.epochs == 0 || scenes.is_empty() {
        return Ok((params, summary));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed);
    rng.set_stream(round as u64);
    let mut state = AdamState::new(params.num_params());
    let adam = cfg.adam_config();
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_mean = BreakdownMean::default();
        for batch in order.chunks(cfg.batch_size) {
            let step = summary.steps;
            let mut grad_sum: Option<Vec<f64>> = None;
            let mut batch_mean = BreakdownMean::default();
            for &s in batch {
                let aug = if cfg.augment {
                    Augmentation::sample(&mut rng)
                } else {
                    Augmentation::IDENTITY
                };
                let scene =
                    subsample_points(&aug.apply(&scenes[s]), cfg.points_per_scene, &mut rng)?;
                let (bd, g) =
                    scene_gradient(cfg, &params, &scene).map_err(|e| with_step(e, step))?;
                batch_mean.add(&bd);
                epoch_mean.add(&bd);
                let g = g.to_flat();
                match &mut grad_sum {
                    None => grad_sum = Some(g),
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                }
            }
            let mut flat = grad_sum.expect("non-empty batch");
            let k = batch.len() as f64;
            flat.iter_mut().for_each(|g| *g /= k);
            let mut grads = params.zeros_like();
            grads.set_flat(&flat)?;
            let grad_norm = adam_step(&mut params, &grads, &mut state, lr, cfg.weight_decay, &adam);
            if !params.is_finite() {
                return Err(Error::NumericalOverflow { step: Some(step) });
            }
            summary.steps += 1;
            if let Some(w) = log.as_deref_mut() {
                let rec = StepRecord {
                    round,
                    epoch,
                    step,
                    lr,
                    grad_norm,
                    loss: batch_mean.mean().expect("non-empty batch"),
                };
                serde_json::to_writer(&mut *w, &rec)?;
                w.write_all(b"\n")
                    .map_err(|e| Error::io("write training log", e))?;
            }
        }
        summary.last_epoch = epoch_mean.mean();
    }
    Ok((params, summary))
}
