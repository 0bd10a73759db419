//! Central finite-difference check of the full training loss.

use std::f64::consts::PI;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward_dense, DensePrediction, ModelParams};
use crate::error::Result;
use crate::geometry::{wrap_half_turn, Point3};
use crate::uncertainty::{
    detection_loss, estimate_uncertainty, LossConfig, LossInputs, RegressionLoss, TargetAssignment,
    UncertaintyMode, COORDINATES,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Fraction of parameters probed.
    pub fraction: f64,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// zero up to rounding do not produce huge ratios.
    pub denominator_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            fraction: 0.05,
            seed: 0,
            denominator_floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: Option<usize>,
    /// Analytic and numeric derivative at the worst parameter.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Probes whose perturbation crossed a non-differentiable point
    /// (ReLU boundary, sign change of a residual, heading wrap).
    pub skipped: usize,
}

fn fold(sig: u64, v: i64) -> u64 {
    (sig ^ v as u64).wrapping_mul(0x100000001b3)
}

fn residual_signature(
    mut sig: u64,
    p: &DensePrediction,
    a: &DensePrediction,
    targets: &TargetAssignment,
    cfg: &LossConfig,
) -> u64 {
    let class = |d: f64| -> i64 {
        let s = (d > 0.0) as i64 - (d < 0.0) as i64;
        match cfg.regression {
            RegressionLoss::L1 => s,
            RegressionLoss::SmoothL1 => s * (1 + (d.abs() >= cfg.smooth_l1_beta) as i64),
        }
    };
    let branch = |d: f64| ((d - wrap_half_turn(d)) / PI).round() as i64;
    for j in 0..p.len() {
        let Some(t) = targets.target(j) else { continue };
        let t = t.to_array();
        for i in 0..COORDINATES {
            let pairs = [
                (p.boxes[[j, i]], t[i]),
                (a.boxes[[j, i]], t[i]),
                (p.boxes[[j, i]], a.boxes[[j, i]]),
            ];
            for (x, y) in pairs {
                let d = x - y;
                if i == 6 {
                    sig = fold(sig, branch(d));
                    sig = fold(sig, class(wrap_half_turn(d)));
                } else {
                    sig = fold(sig, class(d));
                }
            }
        }
    }
    sig
}

struct Probe<'a> {
    points: &'a [Point3],
    targets: &'a TargetAssignment,
    cfg: &'a LossConfig,
    inputs: LossInputs<'a>,
}

impl Probe<'_> {
    fn eval(&self, params: &ModelParams) -> Result<(f64, u64)> {
        let (p, a, tape) = forward_dense(params, self.points)?;
        let out = detection_loss(&p, &a, self.targets, self.cfg, self.inputs)?;
        let sig = residual_signature(tape.signature(), &p, &a, self.targets, self.cfg);
        Ok((out.breakdown.total, sig))
    }
}

/// Compares `analytic` against central differences of the total loss on a
/// random subset of parameters.
pub fn compare_gradients(
    params: &ModelParams,
    analytic: &ModelParams,
    points: &[Point3],
    targets: &TargetAssignment,
    cfg: &LossConfig,
    inputs: LossInputs<'_>,
    check: &GradCheckConfig,
) -> Result<GradCheckReport> {
    // Stop-gradient treats U as a constant; freeze it at the base point so the
    // numerical derivative sees the same function.
    let frozen;
    let mut inputs = inputs;
    if cfg.stop_grad_uncertainty
        && cfg.mode == UncertaintyMode::Learned
        && inputs.frozen_uncertainty.is_none()
    {
        let (p, a, _) = forward_dense(params, points)?;
        frozen = estimate_uncertainty(&p, &a)?;
        inputs.frozen_uncertainty = Some(&frozen);
    }
    let probe = Probe {
        points,
        targets,
        cfg,
        inputs,
    };
    let (_, base_sig) = probe.eval(params)?;
    let n = params.num_params();
    let k = ((check.fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();

    let analytic = analytic.to_flat();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut work = params.clone();
    for idx in chosen {
        let orig = params.get(idx);
        work.set(idx, orig + check.eps);
        let (fp, sp) = probe.eval(&work)?;
        work.set(idx, orig - check.eps);
        let (fm, sm) = probe.eval(&work)?;
        work.set(idx, orig);
        if sp != base_sig || sm != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * check.eps);
        let ga = analytic[idx];
        let denom = ga.abs().max(numeric.abs()).max(check.denominator_floor);
        let rel = (ga - numeric).abs() / denom;
        report.checked += 1;
        if report.worst_index.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_index = Some(idx);
            report.worst_analytic = ga;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

/// Analytic gradient of the total loss, then [`compare_gradients`].
pub fn finite_diff_check(
    params: &ModelParams,
    points: &[Point3],
    targets: &TargetAssignment,
    cfg: &LossConfig,
    inputs: LossInputs<'_>,
    check: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = loss_gradient(params, points, targets, cfg, inputs)?;
    compare_gradients(params, &analytic, points, targets, cfg, inputs, check)
}

pub fn loss_gradient(
    params: &ModelParams,
    points: &[Point3],
    targets: &TargetAssignment,
    cfg: &LossConfig,
    inputs: LossInputs<'_>,
) -> Result<ModelParams> {
    let (p, a, tape) = forward_dense(params, points)?;
    let out = detection_loss(&p, &a, targets, cfg, inputs)?;
    backward(params, &tape, &out.grad_primary, &out.grad_auxiliary)
}
