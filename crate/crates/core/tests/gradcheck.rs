use noisybox::nnet::gradcheck::{
    compare_gradients, finite_diff_check, loss_gradient, GradCheckConfig,
};
use noisybox::nnet::{ModelConfig, ModelParams};
use noisybox::pipeline::gradient_sweep;
use noisybox::scenegen::{generate_scene, subsample_points, SceneSpec};
use noisybox::uncertainty::{assign_targets, LossConfig, LossInputs, UncertaintyMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sweep_matches_finite_differences() {
    let cases = gradient_sweep(32, 1).unwrap();
    let mut worst = 0.0f64;
    for c in &cases {
        println!(
            "case {:2} gamma {:<4} {:?} lambda {:e} mu {} stop {} -> rel {:.3e} ({} checked, {} skipped)",
            c.index,
            c.model.gamma,
            c.loss.granularity,
            c.loss.lambda,
            c.loss.mu,
            c.loss.stop_grad_uncertainty,
            c.report.max_relative_error,
            c.report.checked,
            c.report.skipped
        );
        assert!(c.report.checked > 0);
        worst = worst.max(c.report.max_relative_error);
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

fn small_problem() -> (
    ModelParams,
    Vec<[f64; 3]>,
    noisybox::uncertainty::TargetAssignment,
) {
    let spec = SceneSpec {
        seed: 4,
        objects_min: 2,
        objects_max: 3,
        radius_max: 25.0,
        ground_points: 40,
        ..SceneSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scene = generate_scene(&spec, 0).unwrap();
    scene.pseudo_boxes = scene.gt_boxes.clone();
    let scene = subsample_points(&scene, 40, &mut rng).unwrap();
    let model = ModelConfig {
        trunk_widths: vec![6],
        split_depth: 1,
        head_hidden: 5,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&model, 2).unwrap();
    let targets = assign_targets(&scene);
    (params, scene.points, targets)
}

fn learned(stop: bool) -> LossConfig {
    LossConfig {
        lambda: 1e-4,
        mode: UncertaintyMode::Learned,
        stop_grad_uncertainty: stop,
        ..LossConfig::default()
    }
}

#[test]
fn detects_scaled_gradient() {
    let (params, points, targets) = small_problem();
    let cfg = learned(false);
    let check = GradCheckConfig {
        fraction: 1.0,
        ..GradCheckConfig::default()
    };
    let good = finite_diff_check(
        &params,
        &points,
        &targets,
        &cfg,
        LossInputs::default(),
        &check,
    )
    .unwrap();
    assert!(good.max_relative_error <= 1e-4, "{good:?}");
    let mut bad = loss_gradient(&params, &points, &targets, &cfg, LossInputs::default()).unwrap();
    let flat: Vec<f64> = bad.to_flat().iter().map(|g| 1.5 * g).collect();
    bad.set_flat(&flat).unwrap();
    let r = compare_gradients(
        &params,
        &bad,
        &points,
        &targets,
        &cfg,
        LossInputs::default(),
        &check,
    )
    .unwrap();
    assert!(r.max_relative_error > 1e-2, "{r:?}");
}

#[test]
fn detects_missing_uncertainty_flow() {
    let (params, points, targets) = small_problem();
    let check = GradCheckConfig {
        fraction: 1.0,
        ..GradCheckConfig::default()
    };
    // Stop-gradient derivatives checked against the full-flow objective.
    let stopped = loss_gradient(
        &params,
        &points,
        &targets,
        &learned(true),
        LossInputs::default(),
    )
    .unwrap();
    assert!(
        targets.foreground().len() > 5,
        "fg {}",
        targets.foreground().len()
    );
    let r = compare_gradients(
        &params,
        &stopped,
        &points,
        &targets,
        &learned(false),
        LossInputs::default(),
        &check,
    )
    .unwrap();
    assert!(r.max_relative_error > 1e-2, "{r:?}");
}
