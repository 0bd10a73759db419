//! Dense two-branch regressor, optimizer, checkpoints and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod features;
pub mod gradcheck;
pub mod layers;
pub mod model;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use features::{encode_points, FeatureConfig, FeatureKind};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
pub use layers::Dense;
pub use model::{
    backward, forward_dense, forward_primary, BranchGrad, BranchTag, DensePrediction, ModelConfig,
    ModelParams, Tape,
};
