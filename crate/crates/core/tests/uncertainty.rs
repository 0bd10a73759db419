use ndarray::Array2;
use noisybox::geometry::Box7;
use noisybox::nnet::{BranchTag, DensePrediction};
use noisybox::uncertainty::{
    aggregate_granularity, coordinate_residual, detection_loss, estimate_uncertainty,
    regularized_loss, Granularity, LossConfig, LossInputs, TargetAssignment, UncertaintyMode,
    COORDINATES,
};
use proptest::prelude::*;

fn prediction(rows: &[[f64; 7]], branch: BranchTag) -> DensePrediction {
    let n = rows.len();
    DensePrediction {
        boxes: Array2::from_shape_fn((n, COORDINATES), |(j, i)| rows[j][i]),
        objectness: vec![0.5; n],
        logits: vec![0.0; n],
        branch,
    }
}

fn arb_row() -> impl Strategy<Value = [f64; 7]> {
    (
        -5.0..5.0f64,
        -5.0..5.0f64,
        -1.0..1.0f64,
        1.0..5.0f64,
        1.0..2.5f64,
        1.0..2.0f64,
        -3.1..3.1f64,
    )
        .prop_map(|(x, y, z, l, w, h, t)| [x, y, z, l, w, h, t])
}

/// Predictions of both branches plus one target box per row.
fn arb_batch() -> impl Strategy<Value = (Vec<[f64; 7]>, Vec<[f64; 7]>, Vec<[f64; 7]>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(arb_row(), n),
            prop::collection::vec(arb_row(), n),
            prop::collection::vec(arb_row(), n),
        )
    })
}

fn one_target_per_row(targets: &[[f64; 7]]) -> TargetAssignment {
    TargetAssignment {
        boxes: targets
            .iter()
            .map(|t| Box7::from_array(*t).unwrap())
            .collect(),
        assigned: (0..targets.len()).map(Some).collect(),
    }
}

fn loss_matrix(p: &[[f64; 7]], t: &[[f64; 7]]) -> Array2<f64> {
    Array2::from_shape_fn((p.len(), COORDINATES), |(j, i)| {
        coordinate_residual(i, p[j][i], t[j][i]).abs()
    })
}

fn learned(granularity: Granularity, lambda: f64) -> LossConfig {
    LossConfig {
        lambda,
        granularity,
        mode: UncertaintyMode::Learned,
        ..LossConfig::default()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn uncertainty_symmetric_and_nonnegative((p, a, _) in arb_batch()) {
        let pp = prediction(&p, BranchTag::Primary);
        let pa = prediction(&a, BranchTag::Auxiliary);
        let u = estimate_uncertainty(&pp, &pa).unwrap();
        let v = estimate_uncertainty(&pa, &pp).unwrap();
        prop_assert_eq!(&u.values, &v.values);
        prop_assert!(u.values.iter().all(|&x| x >= 0.0));
        prop_assert!(u.values.column(6).iter().all(|&x| x <= std::f64::consts::FRAC_PI_2 + 1e-12));
        let z = estimate_uncertainty(&pp, &pp).unwrap();
        prop_assert!(z.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_turn_heading_carries_no_uncertainty(row in arb_row()) {
        let mut flipped = row;
        flipped[6] += std::f64::consts::PI;
        let u = estimate_uncertainty(&prediction(&[row], BranchTag::Primary), &prediction(&[flipped], BranchTag::Auxiliary)).unwrap();
        prop_assert!(u.values[[0, 6]] < 1e-12);
    }

    #[test]
    fn zero_uncertainty_gives_plain_loss((p, _, t) in arb_batch(), lambda in 0.0..1.0f64) {
        let l = loss_matrix(&p, &t);
        let plain: f64 = (0..COORDINATES).map(|i| l.column(i).mean().unwrap()).sum();
        let zero = Array2::zeros(l.raw_dim());
        prop_assert!(close(regularized_loss(&l, &zero, lambda), plain));
    }

    #[test]
    fn attenuation_weight_in_unit_interval(u in 0.0..50.0f64) {
        let w = (-u).exp();
        prop_assert!(w > 0.0 && w <= 1.0);
        let one = Array2::from_elem((1, 1), 1.0);
        let uu = Array2::from_elem((1, 1), u);
        prop_assert!(regularized_loss(&one, &uu, 0.0) <= 1.0);
    }

    #[test]
    fn per_cell_optimum_at_log_ratio(l in 1e-3..10.0f64, lambda in 1e-6..1e-3f64) {
        let f = |u: f64| regularized_loss(&Array2::from_elem((1, 1), l), &Array2::from_elem((1, 1), u), lambda);
        let star = (l / lambda).ln();
        let slope = -l * (-star).exp() + lambda;
        prop_assert!(slope.abs() <= 1e-12);
        prop_assert!(f(star) <= f(star * 0.9));
        prop_assert!(f(star) <= f(star * 1.1));
    }

    #[test]
    fn regularized_loss_monotone_in_lambda((p, a, t) in arb_batch(), l1 in 0.0..1.0f64, l2 in 0.0..1.0f64) {
        let l = loss_matrix(&p, &t);
        let u = estimate_uncertainty(&prediction(&p, BranchTag::Primary), &prediction(&a, BranchTag::Auxiliary)).unwrap();
        let (lo, hi) = (l1.min(l2), l1.max(l2));
        prop_assert!(regularized_loss(&l, &u.values, lo) <= regularized_loss(&l, &u.values, hi) + 1e-12);
    }

    #[test]
    fn box_and_cloud_levels_equal_broadcast_coordinate_formula((p, a, t) in arb_batch(), lambda in 0.0..0.1f64) {
        let pp = prediction(&p, BranchTag::Primary);
        let pa = prediction(&a, BranchTag::Auxiliary);
        let targets = one_target_per_row(&t);
        let u = estimate_uncertainty(&pp, &pa).unwrap();
        let lp = loss_matrix(&p, &t);
        let la = loss_matrix(&a, &t);
        for g in [Granularity::Coordinate, Granularity::Box, Granularity::Cloud] {
            let out = detection_loss(&pp, &pa, &targets, &learned(g, lambda), LossInputs::default()).unwrap();
            let ub = aggregate_granularity(&u, g).broadcast(p.len());
            prop_assert!(close(out.breakdown.regularized_primary, regularized_loss(&lp, &ub, lambda)));
            prop_assert!(close(out.breakdown.regularized_auxiliary, regularized_loss(&la, &ub, lambda)));
        }
    }

    #[test]
    fn box_level_uncertainty_is_row_sum((p, a, _) in arb_batch()) {
        let u = estimate_uncertainty(&prediction(&p, BranchTag::Primary), &prediction(&a, BranchTag::Auxiliary)).unwrap();
        let b = aggregate_granularity(&u, Granularity::Box).broadcast(p.len());
        let c = aggregate_granularity(&u, Granularity::Cloud).broadcast(p.len());
        for j in 0..p.len() {
            let row: f64 = u.values.row(j).sum();
            prop_assert!(b.row(j).iter().all(|&v| close(v, row)));
        }
        prop_assert!(c.iter().all(|&v| close(v, u.values.sum())));
    }

    #[test]
    fn mode_none_is_plain_regression((p, a, t) in arb_batch()) {
        let pp = prediction(&p, BranchTag::Primary);
        let pa = prediction(&a, BranchTag::Auxiliary);
        let cfg = LossConfig { mode: UncertaintyMode::None, ..LossConfig::default() };
        let out = detection_loss(&pp, &pa, &one_target_per_row(&t), &cfg, LossInputs::default()).unwrap();
        let plain: f64 = out.breakdown.primary.iter().sum();
        prop_assert!(close(out.breakdown.regularized_primary, plain));
        prop_assert!(out.breakdown.mean_uncertainty.iter().all(|&v| v == 0.0));
    }
}

proptest! {
    #[test]
    fn attenuation_without_penalty_is_non_increasing(l in 0.0..10.0f64, u in 0.0..20.0f64, du in 0.0..5.0f64) {
        let f = |u: f64| regularized_loss(&Array2::from_elem((1, 1), l), &Array2::from_elem((1, 1), u), 0.0);
        prop_assert!(f(u + du) <= f(u));
    }

    #[test]
    fn uncertainty_derivative_matches_finite_difference(l in 1e-3..10.0f64, u in 0.0..15.0f64, lambda in 0.0..1e-2f64) {
        let f = |u: f64| regularized_loss(&Array2::from_elem((1, 1), l), &Array2::from_elem((1, 1), u), lambda);
        let h = 1e-6;
        let numeric = (f(u + h) - f(u - h)) / (2.0 * h);
        let analytic = -l * (-u).exp() + lambda;
        prop_assert!((numeric - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()));
    }
}

#[test]
fn single_term_spot_value() {
    let one = Array2::from_elem((1, 1), 1.0);
    let v = regularized_loss(&one, &one, 1e-5);
    assert!((v - ((-1.0f64).exp() + 1e-5)).abs() <= 1e-12);
}
