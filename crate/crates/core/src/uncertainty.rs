//! Branch-discrepancy uncertainty, the exp-normalized regularized loss, rule
//! based baselines and dense target assignment.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_box, points_in_box, wrap_half_turn, Box7, Point3};
use crate::nnet::{BranchGrad, DensePrediction};
use crate::scenegen::Scene;

pub const COORDINATES: usize = 7;
pub const COORDINATE_NAMES: [&str; COORDINATES] = ["x", "y", "z", "l", "w", "h", "theta"];

/// Distance threshold in meters.
pub const TAU_DISTANCE: f64 = 100.0;
/// Point-count threshold.
pub const TAU_NUMPTS: f64 = 100.0;
/// Volume threshold in cubic meters.
pub const TAU_VOLUME: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Coordinate,
    Box,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Distance,
    Numpts,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    Learned,
    Distance,
    Numpts,
    Volume,
    None,
}

impl UncertaintyMode {
    pub fn rule(self) -> Option<RuleKind> {
        match self {
            UncertaintyMode::Distance => Some(RuleKind::Distance),
            UncertaintyMode::Numpts => Some(RuleKind::Numpts),
            UncertaintyMode::Volume => Some(RuleKind::Volume),
            UncertaintyMode::Learned | UncertaintyMode::None => None,
        }
    }
}

/// Unit residual scales: the loss sees world units directly.
pub const WORLD_SCALES: [f64; COORDINATES] = [1.0; COORDINATES];

/// Residual scales of a box coder with anchor size `(l, w, h)`: positions in
/// BEV by the anchor diagonal, height by the anchor height, sizes by the
/// anchor size, heading in radians.
pub fn anchor_scales(prior: [f64; 3]) -> [f64; COORDINATES] {
    let diag = prior[0].hypot(prior[1]);
    [diag, diag, prior[2], prior[0], prior[1], prior[2], 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    L1,
    SmoothL1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda: f64,
    pub mu: f64,
    pub granularity: Granularity,
    pub mode: UncertaintyMode,
    /// Treat `U` as a constant in the backward pass.
    pub stop_grad_uncertainty: bool,
    pub regression: RegressionLoss,
    pub smooth_l1_beta: f64,
    /// Residuals, and the learned `U` that regularizes them, are divided by
    /// these per-coordinate scales before entering the loss.
    pub residual_scales: [f64; COORDINATES],
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1e-5,
            mu: 1.0,
            granularity: Granularity::Coordinate,
            mode: UncertaintyMode::Learned,
            stop_grad_uncertainty: false,
            regression: RegressionLoss::L1,
            smooth_l1_beta: 1.0,
            residual_scales: WORLD_SCALES,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if !(self.smooth_l1_beta > 0.0 && self.smooth_l1_beta.is_finite()) {
            return Err(Error::InvalidConfig("smooth_l1_beta must be > 0".into()));
        }
        if self
            .residual_scales
            .iter()
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidConfig("residual scales must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-point target box index into `boxes`, or `None` for background.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAssignment {
    pub boxes: Vec<Box7>,
    pub assigned: Vec<Option<usize>>,
}

impl TargetAssignment {
    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn target(&self, i: usize) -> Option<&Box7> {
        self.assigned[i].map(|k| &self.boxes[k])
    }

    pub fn is_foreground(&self, i: usize) -> bool {
        self.assigned[i].is_some()
    }

    pub fn foreground(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_foreground(i)).collect()
    }
}

/// Dense assignment of `boxes` to `points`: a point inside exactly one box
/// takes it, a point inside several takes the one with the nearest BEV
/// center (lower index on ties), other points are background.
pub fn assign_targets_to(points: &[Point3], boxes: &[Box7]) -> TargetAssignment {
    let mut assigned: Vec<Option<usize>> = vec![None; points.len()];
    let mut best_d2 = vec![f64::INFINITY; points.len()];
    for (k, b) in boxes.iter().enumerate() {
        for i in points_in_box(points, b) {
            let p = points[i];
            let d2 = (p[0] - b.x).powi(2) + (p[1] - b.y).powi(2);
            if d2 < best_d2[i] {
                best_d2[i] = d2;
                assigned[i] = Some(k);
            }
        }
    }
    TargetAssignment {
        boxes: boxes.to_vec(),
        assigned,
    }
}

/// Assignment of the scene's pseudo boxes to its points.
pub fn assign_targets(scene: &Scene) -> TargetAssignment {
    assign_targets_to(&scene.points, &scene.pseudo_boxes)
}

/// Signed residual `a - b` for coordinate `i`; the heading is reduced modulo
/// a half turn.
pub fn coordinate_residual(i: usize, a: f64, b: f64) -> f64 {
    if i == 6 {
        wrap_half_turn(a - b)
    } else {
        a - b
    }
}

/// Per-point, per-coordinate nonnegative uncertainty, `n x 7`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyField {
    pub values: Array2<f64>,
}

impl UncertaintyField {
    pub fn zeros(n: usize) -> Self {
        UncertaintyField {
            values: Array2::zeros((n, COORDINATES)),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn row(&self, i: usize) -> [f64; 7] {
        let r = self.values.row(i);
        [r[0], r[1], r[2], r[3], r[4], r[5], r[6]]
    }
}

/// `U[:, i] = |coord_i(p) - coord_i(a)|`.
pub fn estimate_uncertainty(p: &DensePrediction, a: &DensePrediction) -> Result<UncertaintyField> {
    if p.len() != a.len() {
        return Err(Error::RowMismatch {
            primary: p.len(),
            auxiliary: a.len(),
        });
    }
    let mut values = Array2::zeros((p.len(), COORDINATES));
    for j in 0..p.len() {
        for i in 0..COORDINATES {
            values[[j, i]] = coordinate_residual(i, p.boxes[[j, i]], a.boxes[[j, i]]).abs();
        }
    }
    Ok(UncertaintyField { values })
}

/// `sum_i mean_j (L_ji / exp(U_ji) + lambda * U_ji)` over `n x 7` arrays.
pub fn regularized_loss(losses: &Array2<f64>, u: &Array2<f64>, lambda: f64) -> f64 {
    let n = losses.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..losses.ncols() {
        let mut s = 0.0;
        for j in 0..n {
            s += losses[[j, i]] / u[[j, i]].exp() + lambda * u[[j, i]];
        }
        total += s / n as f64;
    }
    total
}

pub fn total_loss(primary: f64, auxiliary: f64, mu: f64) -> f64 {
    primary + mu * auxiliary
}

/// Heuristic box-quality score. `points` is only read for [`RuleKind::Numpts`].
pub fn rule_uncertainty(b: &Box7, points: &[Point3], kind: RuleKind) -> f64 {
    match kind {
        RuleKind::Distance => b.range().min(TAU_DISTANCE) / TAU_DISTANCE,
        RuleKind::Numpts => {
            // An empty box is scored as holding one point.
            let n = points.iter().filter(|p| point_in_box(p, b)).count().max(1) as f64;
            TAU_NUMPTS / n.min(TAU_NUMPTS)
        }
        RuleKind::Volume => TAU_VOLUME / b.volume().min(TAU_VOLUME),
    }
}

/// Uncertainty after aggregation to the requested granularity.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregated {
    Coordinate(Array2<f64>),
    /// One value per row.
    Box(Vec<f64>),
    /// One value for the whole cloud.
    Cloud(f64),
}

impl Aggregated {
    /// Value applied to cell `(j, i)`.
    pub fn at(&self, j: usize, i: usize) -> f64 {
        match self {
            Aggregated::Coordinate(u) => u[[j, i]],
            Aggregated::Box(rows) => rows[j],
            Aggregated::Cloud(c) => *c,
        }
    }

    pub fn broadcast(&self, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, COORDINATES), |(j, i)| self.at(j, i))
    }
}

pub fn aggregate_granularity(u: &UncertaintyField, level: Granularity) -> Aggregated {
    match level {
        Granularity::Coordinate => Aggregated::Coordinate(u.values.clone()),
        Granularity::Box => Aggregated::Box(u.values.rows().into_iter().map(|r| r.sum()).collect()),
        Granularity::Cloud => Aggregated::Cloud(u.values.sum()),
    }
}

fn regression_term(cfg: &LossConfig, r: f64) -> (f64, f64) {
    match cfg.regression {
        RegressionLoss::L1 => (r.abs(), sign(r)),
        RegressionLoss::SmoothL1 => {
            let beta = cfg.smooth_l1_beta;
            if r.abs() < beta {
                (0.5 * r * r / beta, r / beta)
            } else {
                (r.abs() - 0.5 * beta, sign(r))
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn bce_with_logit(logit: f64, y: f64) -> (f64, f64) {
    // softplus(z) - y z, written to avoid overflow.
    let sp = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    let sigma = if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    };
    (sp - y * logit, sigma - y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean regression loss per coordinate over foreground points.
    pub primary: [f64; 7],
    pub auxiliary: [f64; 7],
    pub regularized_primary: f64,
    pub regularized_auxiliary: f64,
    pub objectness_primary: f64,
    pub objectness_auxiliary: f64,
    pub total: f64,
    /// Mean over foreground points of the per-point field in loss units,
    /// before aggregation.
    pub mean_uncertainty: [f64; 7],
    pub foreground: usize,
}

/// Extra inputs for [`detection_loss`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LossInputs<'a> {
    /// Rule-based score per assigned box; required for rule modes.
    pub box_uncertainty: Option<&'a [f64]>,
    /// Replaces the learned field (used to freeze `U` when checking
    /// stop-gradient gradients).
    pub frozen_uncertainty: Option<&'a UncertaintyField>,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub breakdown: LossBreakdown,
    pub grad_primary: BranchGrad,
    pub grad_auxiliary: BranchGrad,
    /// Per-point field over all `n` rows as it entered the loss (divided by
    /// the residual scales in learned mode, zero on background).
    pub field: UncertaintyField,
}

/// Full training objective with its gradient with respect to both branches'
/// decoded predictions.
///
/// Regression terms are averaged over foreground points; objectness is a
/// binary cross-entropy averaged over all points with the foreground mask as
/// target.
pub fn detection_loss(
    pred_p: &DensePrediction,
    pred_a: &DensePrediction,
    targets: &TargetAssignment,
    cfg: &LossConfig,
    inputs: LossInputs<'_>,
) -> Result<LossOutput> {
    let n = pred_p.len();
    if pred_a.len() != n {
        return Err(Error::RowMismatch {
            primary: n,
            auxiliary: pred_a.len(),
        });
    }
    if targets.len() != n {
        return Err(Error::InvalidConfig(format!(
            "target assignment has {} rows, predictions {n}",
            targets.len()
        )));
    }
    let fg = targets.foreground();
    let nf = fg.len();

    // Per-point field, fg rows only for the loss.
    let full_field = match (cfg.mode, inputs.frozen_uncertainty) {
        (UncertaintyMode::Learned, Some(frozen)) => {
            if frozen.rows() != n {
                return Err(Error::RowMismatch {
                    primary: n,
                    auxiliary: frozen.rows(),
                });
            }
            frozen.clone()
        }
        (UncertaintyMode::Learned, None) => estimate_uncertainty(pred_p, pred_a)?,
        (UncertaintyMode::None, _) => UncertaintyField::zeros(n),
        (mode, _) => {
            let scores = inputs.box_uncertainty.ok_or_else(|| {
                Error::InvalidConfig(format!("mode {mode:?} needs per-box rule uncertainty"))
            })?;
            if scores.len() != targets.boxes.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} rule scores for {} boxes",
                    scores.len(),
                    targets.boxes.len()
                )));
            }
            let mut f = UncertaintyField::zeros(n);
            for j in 0..n {
                if let Some(k) = targets.assigned[j] {
                    f.values.row_mut(j).fill(scores[k]);
                }
            }
            f
        }
    };
    let mut field = full_field;
    if cfg.mode == UncertaintyMode::Learned {
        for (i, mut col) in field.values.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v / cfg.residual_scales[i]);
        }
    }
    for j in 0..n {
        if !targets.is_foreground(j) {
            field.values.row_mut(j).fill(0.0);
        }
    }
    let fg_field = UncertaintyField {
        values: field.values.select(ndarray::Axis(0), &fg),
    };
    let agg = aggregate_granularity(&fg_field, cfg.granularity);

    let mut grad_p = BranchGrad::zeros(n);
    let mut grad_a = BranchGrad::zeros(n);
    let mut lp_mean = [0.0; 7];
    let mut la_mean = [0.0; 7];
    let mut mean_u = [0.0; 7];
    let (mut reg_p, mut reg_a) = (0.0, 0.0);

    if nf > 0 {
        let inv = 1.0 / nf as f64;
        let (lam, mu) = (cfg.lambda, cfg.mu);
        // Losses and derivatives for every fg cell.
        let mut lp = Array2::zeros((nf, COORDINATES));
        let mut la = Array2::zeros((nf, COORDINATES));
        let mut dlp = Array2::zeros((nf, COORDINATES));
        let mut dla = Array2::zeros((nf, COORDINATES));
        for (r, &j) in fg.iter().enumerate() {
            let t = targets.target(j).expect("foreground").to_array();
            for i in 0..COORDINATES {
                let sc = cfg.residual_scales[i];
                let (l, d) =
                    regression_term(cfg, coordinate_residual(i, pred_p.boxes[[j, i]], t[i]) / sc);
                lp[[r, i]] = l;
                dlp[[r, i]] = d / sc;
                let (l, d) =
                    regression_term(cfg, coordinate_residual(i, pred_a.boxes[[j, i]], t[i]) / sc);
                la[[r, i]] = l;
                dla[[r, i]] = d / sc;
            }
        }
        for i in 0..COORDINATES {
            lp_mean[i] = lp.column(i).sum() * inv;
            la_mean[i] = la.column(i).sum() * inv;
            mean_u[i] = fg_field.values.column(i).sum() * inv;
        }

        // Loss value and dL/dU per cell, per row, or for the cloud.
        let mut du = Array2::<f64>::zeros((nf, COORDINATES));
        match &agg {
            Aggregated::Coordinate(u) => {
                for r in 0..nf {
                    for i in 0..COORDINATES {
                        let w = (-u[[r, i]]).exp();
                        reg_p += (lp[[r, i]] * w + lam * u[[r, i]]) * inv;
                        reg_a += (la[[r, i]] * w + lam * u[[r, i]]) * inv;
                        du[[r, i]] = (-(lp[[r, i]] + mu * la[[r, i]]) * w + lam * (1.0 + mu)) * inv;
                    }
                }
            }
            Aggregated::Box(rows) => {
                let k = COORDINATES as f64;
                for (r, &ur) in rows.iter().enumerate() {
                    let w = (-ur).exp();
                    let sp = lp.row(r).sum();
                    let sa = la.row(r).sum();
                    reg_p += (sp * w + k * lam * ur) * inv;
                    reg_a += (sa * w + k * lam * ur) * inv;
                    du.row_mut(r)
                        .fill((-(sp + mu * sa) * w + k * lam * (1.0 + mu)) * inv);
                }
            }
            Aggregated::Cloud(uc) => {
                let k = COORDINATES as f64;
                let w = (-uc).exp();
                let sp: f64 = lp_mean.iter().sum();
                let sa: f64 = la_mean.iter().sum();
                reg_p = sp * w + k * lam * uc;
                reg_a = sa * w + k * lam * uc;
                du.fill(-(sp + mu * sa) * w + k * lam * (1.0 + mu));
            }
        }

        let learned_flow = cfg.mode == UncertaintyMode::Learned
            && !cfg.stop_grad_uncertainty
            && inputs.frozen_uncertainty.is_none();
        for (r, &j) in fg.iter().enumerate() {
            for i in 0..COORDINATES {
                let w = (-agg.at(r, i)).exp();
                let mut gp = dlp[[r, i]] * w * inv;
                let mut ga = mu * dla[[r, i]] * w * inv;
                if learned_flow {
                    let s = sign(coordinate_residual(
                        i,
                        pred_p.boxes[[j, i]],
                        pred_a.boxes[[j, i]],
                    )) / cfg.residual_scales[i];
                    gp += du[[r, i]] * s;
                    ga -= du[[r, i]] * s;
                }
                grad_p.boxes[[j, i]] = gp;
                grad_a.boxes[[j, i]] = ga;
            }
        }
    }

    let (mut obj_p, mut obj_a) = (0.0, 0.0);
    let invn = 1.0 / n.max(1) as f64;
    for j in 0..n {
        let y = if targets.is_foreground(j) { 1.0 } else { 0.0 };
        let (l, d) = bce_with_logit(pred_p.logits[j], y);
        obj_p += l * invn;
        grad_p.logits[j] = d * invn;
        let (l, d) = bce_with_logit(pred_a.logits[j], y);
        obj_a += l * invn;
        grad_a.logits[j] = d * invn;
    }

    let total = total_loss(reg_p, reg_a, cfg.mu) + obj_p + obj_a;
    if !total.is_finite() {
        return Err(Error::NumericalOverflow { step: None });
    }
    Ok(LossOutput {
        breakdown: LossBreakdown {
            primary: lp_mean,
            auxiliary: la_mean,
            regularized_primary: reg_p,
            regularized_auxiliary: reg_a,
            objectness_primary: obj_p,
            objectness_auxiliary: obj_a,
            total,
            mean_uncertainty: mean_u,
            foreground: nf,
        },
        grad_primary: grad_p,
        grad_auxiliary: grad_a,
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::BranchTag;
    use ndarray::array;
    use std::f64::consts::PI;

    fn pred(rows: &[[f64; 7]], tag: BranchTag) -> DensePrediction {
        let n = rows.len();
        DensePrediction {
            boxes: Array2::from_shape_fn((n, 7), |(j, i)| rows[j][i]),
            objectness: vec![0.5; n],
            logits: vec![0.0; n],
            branch: tag,
        }
    }

    #[test]
    fn eq1_arithmetic() {
        let p = pred(&[[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]], BranchTag::Primary);
        let a = pred(
            &[[1.2, 0.0, 0.0, 1.0, 1.0, 1.0, PI - 1e-12]],
            BranchTag::Auxiliary,
        );
        let u = estimate_uncertainty(&p, &a).unwrap();
        assert!((u.values[[0, 0]] - 0.2).abs() < 1e-12);
        assert!(u.values[[0, 6]] < 1e-9);
        let same = estimate_uncertainty(&p, &p).unwrap();
        assert!(same.values.iter().all(|&v| v == 0.0));
        let short = pred(&[], BranchTag::Auxiliary);
        assert!(matches!(
            estimate_uncertainty(&p, &short),
            Err(Error::RowMismatch { .. })
        ));
    }

    #[test]
    fn eq2_examples() {
        let l = array![[1.0]];
        assert!(
            (regularized_loss(&l, &array![[1.0]], 1e-5) - ((-1.0f64).exp() + 1e-5)).abs() < 1e-15
        );
        assert!((regularized_loss(&array![[0.0]], &array![[2.0]], 1e-5) - 2e-5).abs() < 1e-18);
        let ls = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(
            regularized_loss(&ls, &Array2::zeros((2, 2)), 1e-5),
            2.0 + 3.0
        );
    }

    #[test]
    fn eq3_examples() {
        assert_eq!(total_loss(2.0, 3.0, 1.0), 5.0);
        assert_eq!(total_loss(2.0, 3.0, 0.0), 2.0);
        assert_eq!(total_loss(2.0, 3.0, 0.5), 3.5);
    }

    #[test]
    fn rule_examples() {
        let at = |x: f64| Box7::new(x, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(rule_uncertainty(&at(50.0), &[], RuleKind::Distance), 0.5);
        assert_eq!(rule_uncertainty(&at(150.0), &[], RuleKind::Distance), 1.0);
        let b = Box7::new(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0).unwrap();
        let fifty: Vec<Point3> = (0..50).map(|i| [i as f64 * 0.01, 0.0, 0.0]).collect();
        let two_hundred: Vec<Point3> = (0..200).map(|i| [i as f64 * 0.004, 0.0, 0.0]).collect();
        assert_eq!(rule_uncertainty(&b, &fifty, RuleKind::Numpts), 2.0);
        assert_eq!(rule_uncertainty(&b, &two_hundred, RuleKind::Numpts), 1.0);
        assert_eq!(rule_uncertainty(&at(0.0), &[], RuleKind::Volume), 10.0);
        let v = Box7::new(0.0, 0.0, 0.0, 2.0, 5.0, 1.0, 0.0).unwrap();
        assert_eq!(rule_uncertainty(&v, &[], RuleKind::Volume), 1.0);
    }

    #[test]
    fn granularity_examples() {
        let u = UncertaintyField {
            values: Array2::from_elem((2, 7), 0.1),
        };
        match aggregate_granularity(&u, Granularity::Box) {
            Aggregated::Box(rows) => assert!(rows.iter().all(|r| (r - 0.7).abs() < 1e-12)),
            other => panic!("{other:?}"),
        }
        match aggregate_granularity(&u, Granularity::Cloud) {
            Aggregated::Cloud(c) => assert!((c - 1.4).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            aggregate_granularity(&u, Granularity::Coordinate),
            Aggregated::Coordinate(u.values)
        );
    }

    #[test]
    fn assignment_rules() {
        let a = Box7::new(0.0, 0.0, 0.0, 4.0, 4.0, 2.0, 0.0).unwrap();
        let b = Box7::new(2.0, 0.0, 0.0, 4.0, 4.0, 2.0, 0.0).unwrap();
        let pts = vec![
            [-1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [30.0, 0.0, 0.0],
            [3.5, 0.0, 0.0],
        ];
        let t = assign_targets_to(&pts, &[a, b]);
        assert_eq!(t.assigned, vec![Some(0), Some(0), None, Some(1)]);
        // Centers at distance 1 and 3: the nearer box wins.
        let near = Box7::new(1.0, 0.0, 0.0, 10.0, 10.0, 2.0, 0.0).unwrap();
        let far = Box7::new(3.0, 0.0, 0.0, 10.0, 10.0, 2.0, 0.0).unwrap();
        let t = assign_targets_to(&[[0.0, 0.0, 0.0]], &[far, near]);
        assert_eq!(t.assigned, vec![Some(1)]);
        assert_eq!(t.target(0), Some(&near));
    }
}
