//! Two-phase experiment protocol: train, freeze, retrain, evaluate.

mod checkpoint;
mod config;
mod metrics;
mod protocol;

pub use checkpoint::{Checkpoint, Tensor, TrackerState, CHECKPOINT_VERSION, TRACKER_UNINITIALIZED};
pub use config::{parse_pairs, RunConfig, Variant};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use protocol::{
    calibrate_epsilon, epsilon_from_distances, evaluate, evaluate_checkpoint, in_distribution_distances, mean,
    quantile, retraining_agent, run_retraining_phase, run_training_phase, sample_std, EpisodeStats, EvalSummary, RetrainingOutcome,
    TrainingOutcome, UncertaintyProbe, CHECKPOINT_FILE, EPSILON_CEIL, EPSILON_FLOOR, METRICS_FILE,
};

#[cfg(test)]
mod tests;
