use std::time::Instant;

use serde::Serialize;

use crate::error::{FgseError, Result};
use crate::scenegraph::SceneGraph;
use crate::stream::engine::{LatencyReport, StreamConfig, StreamEngine, WindowModel};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    /// Incoming frames pushed.
    pub frames: usize,
    /// Frames the model actually encoded after downsampling.
    pub graphs: usize,
    pub seconds: f64,
    /// Encoded graphs per wall-clock second.
    pub graphs_per_second: f64,
    /// Incoming frames per wall-clock second.
    pub frames_per_second: f64,
    pub predictions: usize,
    pub latency: LatencyReport,
}

/// Times end-to-end streaming over `streams`, one engine per stream.
pub fn bench<M: WindowModel>(model: &M, streams: &[Vec<SceneGraph>], cfg: StreamConfig) -> Result<BenchReport> {
    if cfg.fps.is_none() {
        return Err(FgseError::Config("bench needs the stream fps".into()));
    }
    let mut frames = 0;
    let mut graphs = 0;
    let mut predictions = 0;
    let mut latency = None;
    let started = Instant::now();
    for s in streams {
        let mut engine = StreamEngine::new(model, cfg)?;
        for g in s {
            predictions += engine.push_frame(g)?.len();
        }
        predictions += engine.flush()?.len();
        frames += s.len();
        graphs += s.len().div_ceil(cfg.downsample);
        latency = Some(engine.latency_report()?);
    }
    let seconds = started.elapsed().as_secs_f64();
    let latency = latency.ok_or_else(|| FgseError::Argument("bench needs at least one stream".into()))?;
    Ok(BenchReport {
        frames,
        graphs,
        seconds,
        graphs_per_second: graphs as f64 / seconds.max(1e-12),
        frames_per_second: frames as f64 / seconds.max(1e-12),
        predictions,
        latency,
    })
}
