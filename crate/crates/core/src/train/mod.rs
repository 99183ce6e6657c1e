//! Training loop, leave-one-subject-out folds, F1 metrics and experiment drivers.

mod eval;
mod experiments;
mod folds;
mod metrics;
mod trainer;

pub use eval::{check_vocab, evaluate, EpisodePredictions, EvalReport};
pub use experiments::{
    ablation_experiment, cross_validate, mean_scores, par_map, stream_config_for, window_scaling_experiment,
    worker_threads, AblationScores, AblationTable, CrossValidation, FoldResult, RunManifest, ScalingRow, ScalingTable,
};
pub use folds::{make_folds, Fold, FoldLoader};
pub use metrics::{f1_pooled, f1_scores, F1Scores};
pub use trainer::{
    fit_config, prepare_sequences, train, train_sequences, training_windows, EpochMetrics, TrainConfig, TrainRun,
};

#[cfg(test)]
mod tests;
