use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::model::{FgseModel, OutputMode, WindowOutput};
use crate::scenegraph::{SceneGraph, Vocabulary};
use crate::stream::vote::FrameVotes;

/// A per-window classifier that can be driven by the streaming engine.
pub trait WindowModel {
    /// Cached per-frame representation.
    type Token: Clone;

    fn window(&self) -> usize;
    fn head_count(&self) -> usize;
    fn output_mode(&self) -> OutputMode;
    fn embed(&self, g: &SceneGraph) -> Result<Self::Token>;
    fn predict(&self, window: &[&Self::Token]) -> Result<WindowOutput>;
}

impl WindowModel for FgseModel {
    type Token = Vec<f32>;

    fn window(&self) -> usize {
        self.config().window
    }

    fn head_count(&self) -> usize {
        self.config().n_heads_out
    }

    fn output_mode(&self) -> OutputMode {
        self.config().output_mode
    }

    fn embed(&self, g: &SceneGraph) -> Result<Vec<f32>> {
        self.embed_frame(g)
    }

    fn predict(&self, window: &[&Vec<f32>]) -> Result<WindowOutput> {
        let rows: Vec<&[f32]> = window.iter().map(|t| t.as_slice()).collect();
        self.predict_from_embeddings(&rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    /// Keep every `downsample`-th incoming frame.
    pub downsample: usize,
    /// Frame rate of the incoming stream, before downsampling.
    pub fps: Option<f64>,
    /// Window advance in kept frames.
    pub stride: usize,
    /// Also emit labels for frames still collecting votes.
    pub provisional: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            downsample: 1,
            fps: None,
            stride: 1,
            provisional: false,
        }
    }
}

/// Label decision for one incoming frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPrediction {
    pub t: u64,
    /// Per-head label.
    pub labels: Vec<usize>,
    /// Per-head vote count of the winning label.
    pub votes: Vec<usize>,
    /// Votes the frame received.
    pub total_votes: usize,
    /// Incoming frames between this frame's arrival and its emission.
    pub delay_frames: usize,
    pub provisional: bool,
}

/// One output line of the streaming protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub t: u64,
    pub head: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub votes: usize,
    pub delay_frames: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub provisional: bool,
}

impl FinalPrediction {
    pub fn lines(&self, vocab: Option<&Vocabulary>) -> Vec<PredictionLine> {
        self.labels
            .iter()
            .zip(&self.votes)
            .enumerate()
            .map(|(h, (&label, &votes))| PredictionLine {
                t: self.t,
                head: vocab
                    .and_then(|v| v.heads.get(h).cloned())
                    .unwrap_or_else(|| h.to_string()),
                label,
                name: vocab.and_then(|v| v.actions.get(label).cloned()),
                votes,
                delay_frames: self.delay_frames,
                provisional: self.provisional,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub window: usize,
    /// Frame rate seen by the model, after downsampling.
    pub fps_effective: f64,
    /// `W / fps_effective`.
    pub structural_delay_s: f64,
    pub compute_mean_s: f64,
    pub compute_max_s: f64,
    /// Pushes the compute statistics cover.
    pub samples: usize,
    pub total_delay_s: f64,
}

const TIMING_HISTORY: usize = 100;

#[derive(Debug, Clone)]
struct Slot {
    /// Position in the padded stream.
    virt: usize,
    votes: FrameVotes,
    /// `(time index, arrival push)` of the incoming frames this kept frame stands for.
    raw: Vec<(u64, usize)>,
}

/// Pending frames with their accumulated votes, oldest first.
#[derive(Debug, Clone, Default)]
pub struct VoteBuffer {
    slots: VecDeque<Slot>,
}

impl VoteBuffer {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Vote counts of the pending frames, oldest first.
    pub fn vote_counts(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.votes.count()).collect()
    }

    fn slot_mut(&mut self, virt: usize) -> Option<&mut Slot> {
        let first = self.slots.front()?.virt;
        let i = virt.checked_sub(first)?;
        self.slots.get_mut(i)
    }
}

/// Sliding-window streaming inference with per-frame majority voting.
pub struct StreamEngine<'m, M: WindowModel> {
    model: &'m M,
    cfg: StreamConfig,
    w: usize,
    /// Padding frames placed before the first kept frame.
    left_pad: usize,
    /// Lowest window row that produces a prediction.
    min_row: usize,
    pushes: usize,
    kept: usize,
    ring: VecDeque<M::Token>,
    first_token: Option<M::Token>,
    virt_len: usize,
    next_start: usize,
    windows_run: usize,
    buffer: VoteBuffer,
    /// Last emitted decision, reused for skipped frames arriving after it.
    last_emitted: Option<(usize, FinalPrediction)>,
    timings: VecDeque<Duration>,
}

impl<'m, M: WindowModel> StreamEngine<'m, M> {
    pub fn new(model: &'m M, cfg: StreamConfig) -> Result<Self> {
        let w = model.window();
        if cfg.downsample == 0 {
            return Err(FgseError::Config("downsample factor must be at least 1".into()));
        }
        if cfg.stride == 0 || cfg.stride > w {
            return Err(FgseError::Config(format!(
                "stride must be in 1..={w}, got {}",
                cfg.stride
            )));
        }
        if let Some(fps) = cfg.fps {
            if fps.is_nan() || fps <= 0.0 {
                return Err(FgseError::Config(format!("fps must be positive, got {fps}")));
            }
        }
        let (left_pad, min_row) = match model.output_mode() {
            OutputMode::PerFrame => (0, 0),
            OutputMode::Center => (w / 2, w / 2),
            OutputMode::Single => (w - 1, w - 1),
        };
        if model.output_mode() != OutputMode::PerFrame && cfg.stride != 1 {
            return Err(FgseError::Config(format!(
                "output mode {} gives one vote per window and needs stride 1",
                model.output_mode()
            )));
        }
        Ok(StreamEngine {
            model,
            cfg,
            w,
            left_pad,
            min_row,
            pushes: 0,
            kept: 0,
            ring: VecDeque::with_capacity(w),
            first_token: None,
            virt_len: 0,
            next_start: 0,
            windows_run: 0,
            buffer: VoteBuffer::default(),
            last_emitted: None,
            timings: VecDeque::with_capacity(TIMING_HISTORY),
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn buffer(&self) -> &VoteBuffer {
        &self.buffer
    }

    /// Feeds one incoming frame; returns the decisions that became final.
    pub fn push_frame(&mut self, g: &SceneGraph) -> Result<Vec<FinalPrediction>> {
        let started = Instant::now();
        let push = self.pushes;
        self.pushes += 1;
        let mut out = Vec::new();
        let kept_index = push / self.cfg.downsample;
        if !push.is_multiple_of(self.cfg.downsample) {
            let virt = self.left_pad + kept_index;
            if let Some(slot) = self.buffer.slot_mut(virt) {
                slot.raw.push((g.time_index, push));
            } else if let Some((k, last)) = &self.last_emitted {
                debug_assert_eq!(*k, kept_index);
                out.push(FinalPrediction {
                    t: g.time_index,
                    delay_frames: 0,
                    ..last.clone()
                });
            }
            return Ok(out);
        }

        let token = self.model.embed(g)?;
        if self.kept == 0 {
            for _ in 0..self.left_pad {
                self.push_token(token.clone());
            }
            self.first_token = Some(token.clone());
        }
        self.push_token(token);
        self.buffer.slots.push_back(Slot {
            virt: self.left_pad + self.kept,
            votes: FrameVotes::new(self.model.head_count()),
            raw: vec![(g.time_index, push)],
        });
        self.kept += 1;

        while self.next_start + self.w <= self.virt_len {
            let start = self.next_start;
            self.run_window(start, false)?;
            self.next_start += self.cfg.stride;
            if self.cfg.provisional {
                out.extend(self.provisional());
            }
        }
        self.emit_final(&mut out, false)?;
        if self.timings.len() == TIMING_HISTORY {
            self.timings.pop_front();
        }
        self.timings.push_back(started.elapsed());
        Ok(out)
    }

    /// Emits every pending frame with the votes it can still get, then resets.
    pub fn flush(&mut self) -> Result<Vec<FinalPrediction>> {
        let mut out = Vec::new();
        if self.kept == 0 {
            self.reset();
            return Ok(out);
        }
        let last = self.ring.back().cloned().expect("kept frames imply tokens");
        match self.model.output_mode() {
            OutputMode::PerFrame => {
                if self.windows_run == 0 && self.virt_len < self.w {
                    let extra = self.w - self.virt_len;
                    let first = self.first_token.clone().expect("first token");
                    for _ in 0..extra {
                        self.ring.push_front(first.clone());
                    }
                    for s in self.buffer.slots.iter_mut() {
                        s.virt += extra;
                    }
                    self.left_pad += extra;
                    self.virt_len += extra;
                }
                let uncovered = self.buffer.slots.iter().any(|s| s.votes.count() == 0);
                if uncovered {
                    self.run_window(self.virt_len - self.w, true)?;
                }
            }
            OutputMode::Center | OutputMode::Single => {
                while self.buffer.slots.iter().any(|s| s.votes.count() == 0) {
                    self.push_token(last.clone());
                    while self.next_start + self.w <= self.virt_len {
                        let start = self.next_start;
                        self.run_window(start, false)?;
                        self.next_start += 1;
                    }
                }
            }
        }
        self.emit_final(&mut out, true)?;
        self.reset();
        Ok(out)
    }

    /// Structural delay `W / fps` plus measured compute time per push.
    pub fn latency_report(&self) -> Result<LatencyReport> {
        let fps = self
            .cfg
            .fps
            .ok_or_else(|| FgseError::Config("latency report needs the stream fps".into()))?;
        Ok(latency_from(self.w, fps / self.cfg.downsample as f64, &self.timings))
    }

    fn reset(&mut self) {
        let timings = std::mem::take(&mut self.timings);
        let fresh = StreamEngine::new(self.model, self.cfg).expect("config validated at construction");
        *self = StreamEngine { timings, ..fresh };
    }

    fn push_token(&mut self, t: M::Token) {
        if self.ring.len() == self.w {
            self.ring.pop_front();
        }
        self.ring.push_back(t);
        self.virt_len += 1;
    }

    /// Runs the window starting at padded position `start`, which must end at the newest token.
    /// A closing window only votes on frames that have no votes yet.
    fn run_window(&mut self, start: usize, closing: bool) -> Result<()> {
        debug_assert_eq!(start + self.w, self.virt_len);
        let refs: Vec<&M::Token> = self.ring.iter().collect();
        let output = self.model.predict(&refs)?;
        self.windows_run += 1;
        for (pos, probs) in &output.rows {
            if let Some(slot) = self.buffer.slot_mut(start + pos) {
                if !closing || slot.votes.count() == 0 {
                    slot.votes.add(probs);
                }
            }
        }
        Ok(())
    }

    fn decision(slot: &Slot, t: u64, arrival: usize, now: usize, provisional: bool) -> Result<FinalPrediction> {
        let resolved = slot.votes.resolve()?;
        Ok(FinalPrediction {
            t,
            labels: resolved.iter().map(|r| r.0).collect(),
            votes: resolved.iter().map(|r| r.1).collect(),
            total_votes: slot.votes.count(),
            delay_frames: now - arrival,
            provisional,
        })
    }

    fn emit_final(&mut self, out: &mut Vec<FinalPrediction>, all: bool) -> Result<()> {
        let now = self.pushes.saturating_sub(1);
        while let Some(front) = self.buffer.slots.front() {
            // no later window can place a prediction on this frame
            let done = all || self.next_start + self.min_row > front.virt;
            if !done {
                break;
            }
            let slot = self.buffer.slots.pop_front().expect("front exists");
            let kept_index = slot.virt - self.left_pad;
            let mut last = None;
            for &(t, arrival) in &slot.raw {
                let p = Self::decision(&slot, t, arrival, now, false)?;
                out.push(p.clone());
                last = Some(p);
            }
            self.last_emitted = last.map(|p| (kept_index, p));
        }
        Ok(())
    }

    fn provisional(&self) -> Vec<FinalPrediction> {
        let now = self.pushes.saturating_sub(1);
        self.buffer
            .slots
            .iter()
            .filter(|s| s.votes.count() > 0)
            .filter_map(|s| {
                let (t, arrival) = s.raw[0];
                Self::decision(s, t, arrival, now, true).ok()
            })
            .collect()
    }
}

pub(crate) fn latency_from(window: usize, fps_effective: f64, timings: &VecDeque<Duration>) -> LatencyReport {
    let secs: Vec<f64> = timings.iter().map(Duration::as_secs_f64).collect();
    let mean = if secs.is_empty() {
        0.0
    } else {
        secs.iter().sum::<f64>() / secs.len() as f64
    };
    let max = secs.iter().cloned().fold(0.0, f64::max);
    let structural = window as f64 / fps_effective;
    LatencyReport {
        window,
        fps_effective,
        structural_delay_s: structural,
        compute_mean_s: mean,
        compute_max_s: max,
        samples: secs.len(),
        total_delay_s: structural + mean,
    }
}

/// Pushes a whole sequence through a fresh engine and flushes it.
pub fn run_stream<M: WindowModel>(model: &M, graphs: &[SceneGraph], cfg: StreamConfig) -> Result<Vec<FinalPrediction>> {
    let mut engine = StreamEngine::new(model, cfg)?;
    let mut out = Vec::with_capacity(graphs.len());
    for g in graphs {
        out.extend(engine.push_frame(g)?.into_iter().filter(|p| !p.provisional));
    }
    out.extend(engine.flush()?);
    Ok(out)
}

/// Offline reference: enumerates every window of the whole sequence at once and
/// votes per frame. Returns `[head][frame]` labels for the incoming frames.
pub fn batch_predictions<M: WindowModel>(
    model: &M,
    graphs: &[SceneGraph],
    cfg: StreamConfig,
) -> Result<Vec<Vec<usize>>> {
    let heads = model.head_count();
    if graphs.is_empty() {
        return Ok(vec![Vec::new(); heads]);
    }
    let w = model.window();
    let kept: Vec<&SceneGraph> = graphs.iter().step_by(cfg.downsample.max(1)).collect();
    let tokens: Vec<M::Token> = kept.iter().map(|g| model.embed(g)).collect::<Result<_>>()?;
    let n = tokens.len();
    let (left, right) = match model.output_mode() {
        OutputMode::PerFrame => (w.saturating_sub(n), 0),
        OutputMode::Center => (w / 2, w - 1 - w / 2),
        OutputMode::Single => (w - 1, 0),
    };
    let mut padded: Vec<&M::Token> = Vec::with_capacity(left + n + right);
    padded.extend(std::iter::repeat_n(&tokens[0], left));
    padded.extend(tokens.iter());
    padded.extend(std::iter::repeat_n(&tokens[n - 1], right));

    let mut starts: Vec<usize> = (0..)
        .map(|i| i * cfg.stride)
        .take_while(|s| s + w <= padded.len())
        .collect();
    // a closing window aligned to the end only votes on frames no regular window reached
    let covered = starts.last().map_or(0, |s| s + w);
    if covered < padded.len() {
        starts.push(padded.len() - w);
    }
    let mut votes = vec![FrameVotes::new(heads); n];
    for (i, &s) in starts.iter().enumerate() {
        let closing = covered < padded.len() && i + 1 == starts.len();
        let out = model.predict(&padded[s..s + w])?;
        for (pos, probs) in &out.rows {
            let v = s + pos;
            if v >= left && v < left + n && (!closing || v >= covered) {
                votes[v - left].add(probs);
            }
        }
    }
    let mut labels = vec![Vec::with_capacity(graphs.len()); heads];
    for fv in &votes {
        let r = fv.resolve()?;
        for (h, (label, _)) in r.into_iter().enumerate() {
            labels[h].push(label);
        }
    }
    labels
        .into_iter()
        .map(|l| crate::scenegraph::upsample_predictions(&l, cfg.downsample.max(1), graphs.len()))
        .collect()
}

/// Per-head label streams from emitted decisions, in emission order.
pub fn labels_by_head(preds: &[FinalPrediction], heads: usize) -> Vec<Vec<usize>> {
    (0..heads)
        .map(|h| preds.iter().filter(|p| !p.provisional).map(|p| p.labels[h]).collect())
        .collect()
}
