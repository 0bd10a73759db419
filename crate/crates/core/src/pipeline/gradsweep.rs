//! Randomized sweep of finite-difference gradient checks over model and
//! loss configurations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nnet::gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
use crate::nnet::{ModelConfig, ModelParams};
use crate::scenegen::{
    corrupt_labels, generate_scene, subsample_points, CorruptionSpec, SceneSpec,
};
use crate::uncertainty::{
    assign_targets, Granularity, LossConfig, LossInputs, RegressionLoss, UncertaintyMode,
};

pub const SWEEP_GAMMAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
pub const SWEEP_LAMBDAS: [f64; 3] = [0.0, 1e-5, 1e-4];
pub const SWEEP_GRANULARITIES: [Granularity; 3] = [
    Granularity::Coordinate,
    Granularity::Box,
    Granularity::Cloud,
];
/// Points per checked batch.
pub const SWEEP_POINTS: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub index: usize,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub report: GradCheckReport,
}

fn case_configs(k: usize, rng: &mut ChaCha8Rng) -> (ModelConfig, LossConfig) {
    let depth = rng.random_range(1..=2usize);
    let trunk_widths: Vec<usize> = (0..depth).map(|_| rng.random_range(3..=8)).collect();
    let model = ModelConfig {
        split_depth: rng.random_range(0..=depth),
        head_hidden: rng.random_range(3..=8),
        gamma: SWEEP_GAMMAS[k % 4],
        trunk_widths,
        ..ModelConfig::default()
    };
    // Case 0 is the degenerate lambda = mu = 0 objective.
    let loss = LossConfig {
        lambda: if k == 0 {
            0.0
        } else {
            SWEEP_LAMBDAS[(k / 4 + k) % 3]
        },
        mu: if k == 0 {
            0.0
        } else {
            [0.5, 1.0, 2.0][rng.random_range(0..3)]
        },
        granularity: SWEEP_GRANULARITIES[(k / 8 + k / 2) % 3],
        stop_grad_uncertainty: (k / 2) % 2 == 1,
        regression: if k % 5 == 4 {
            RegressionLoss::SmoothL1
        } else {
            RegressionLoss::L1
        },
        mode: UncertaintyMode::Learned,
        ..LossConfig::default()
    };
    (model, loss)
}

/// Runs `n` checks. Case `k` cycles gamma with `k % 4`; granularity, lambda
/// and the stop-gradient flag cycle with other strides, so any 12
/// consecutive cases cover every listed value.
pub fn gradient_sweep(n: usize, seed: u64) -> Result<Vec<SweepCase>> {
    let spec = SceneSpec {
        seed,
        objects_min: 2,
        objects_max: 3,
        radius_max: 25.0,
        ground_points: 60,
        ..SceneSpec::default()
    };
    let corruption = CorruptionSpec {
        fraction: 0.5,
        stds: [0.5, 0.5, 0.2, 0.4, 0.4, 0.2, 0.3],
        seed,
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let (model, loss) = case_configs(k, &mut rng);
        let scene = generate_scene(&spec, k as u64)?;
        let (scene, _) = corrupt_labels(&scene, &corruption, k as u64)?;
        let scene = subsample_points(&scene, SWEEP_POINTS, &mut rng)?;
        let targets = assign_targets(&scene);
        let params = ModelParams::init(&model, rng.random())?;
        let check = GradCheckConfig {
            seed: rng.random(),
            ..GradCheckConfig::default()
        };
        let report = finite_diff_check(
            &params,
            &scene.points,
            &targets,
            &loss,
            LossInputs::default(),
            &check,
        )?;
        out.push(SweepCase {
            index: k,
            model,
            loss,
            report,
        });
    }
    Ok(out)
}
