//! Sliding-window streaming inference with per-frame majority voting.

mod bench;
mod engine;
mod vote;

pub use bench::{bench, BenchReport};
pub use engine::{
    batch_predictions, labels_by_head, run_stream, FinalPrediction, LatencyReport, PredictionLine, StreamConfig,
    StreamEngine, VoteBuffer, WindowModel,
};
pub use vote::{majority_vote, FrameVotes};
