//! Streaming manipulation-action recognition over per-frame scene graphs.

pub mod error;
pub mod model;
pub mod numcore;
pub mod scenegraph;
pub mod stream;
pub mod synth;
pub mod train;

pub use error::{FgseError, Result};
