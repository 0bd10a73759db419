//! Training, inference and the self-training loop.

pub mod config;
pub mod experiment;
pub mod gradsweep;
pub mod infer;
pub mod selftrain;
pub mod train;

pub use config::{split_override, ResidualSpace, SeedSource, TrainConfig};
pub use experiment::{ablation_configs, run_experiment, AblationGrid, ExperimentResult};
pub use gradsweep::{gradient_sweep, SweepCase};
pub use infer::{
    box_uncertainties, evaluate, infer_detections, infer_pseudo_boxes, mean_uncertainty,
    nms_aggregate, nms_indices,
};
pub use selftrain::{
    pseudo_label_quality, round_dir, seed_labels, self_train, PseudoLabelQuality, RoundReport,
};
pub use train::{train_round, StepRecord, TrainSummary};
