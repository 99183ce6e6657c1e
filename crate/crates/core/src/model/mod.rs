//! Graph encoder, sequence encoder and classification heads.

mod config;
mod fgse;
pub mod layers;

pub use config::{count_params, FgseConfig, OutputMode, Pooling};
pub use fgse::{argmax, Bound, CheckpointMeta, FgseModel, WindowOutput};
