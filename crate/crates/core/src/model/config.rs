use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::scenegraph::RELATION_COUNT;

/// Graph-level readout feeding the sequence encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Concatenate the hand nodes' embeddings.
    Hand,
    /// Average over all nodes.
    GlobalMean,
}

/// How a window's outputs become predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// One prediction per frame in the window; combined by majority voting.
    PerFrame,
    /// Mean of the encoded window, one prediction for its last frame.
    Single,
    /// Per-frame model, but only the row at `W/2` is used.
    Center,
}

impl FromStr for Pooling {
    type Err = FgseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hand" => Ok(Pooling::Hand),
            "mean" | "global_mean" => Ok(Pooling::GlobalMean),
            _ => Err(FgseError::Argument(format!("unknown pooling {s:?} (hand|mean)"))),
        }
    }
}

impl FromStr for OutputMode {
    type Err = FgseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" | "per_frame" => Ok(OutputMode::PerFrame),
            "single" => Ok(OutputMode::Single),
            "center" => Ok(OutputMode::Center),
            _ => Err(FgseError::Argument(format!(
                "unknown output mode {s:?} (frame|single|center)"
            ))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Hand => "hand",
            Pooling::GlobalMean => "mean",
        })
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputMode::PerFrame => "frame",
            OutputMode::Single => "single",
            OutputMode::Center => "center",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FgseConfig {
    /// Width of the one-hot object category input.
    pub n_categories: usize,
    /// Graph convolution layers (N).
    pub n_graph_layers: usize,
    pub d_model: usize,
    /// Attention heads, shared by graph and sequence attention.
    pub n_heads: usize,
    pub n_seq_layers: usize,
    /// Window length W.
    pub window: usize,
    pub n_classes: usize,
    /// Label streams: 2 for per-hand bimanual labels, else 1.
    pub n_heads_out: usize,
    pub pooling: Pooling,
    pub output_mode: OutputMode,
    /// Feed-forward expansion of the sequence encoder.
    pub ff_mult: usize,
    pub ln_eps: f32,
}

impl Default for FgseConfig {
    fn default() -> Self {
        FgseConfig {
            n_categories: 8,
            n_graph_layers: 2,
            d_model: 64,
            n_heads: 4,
            n_seq_layers: 2,
            window: 30,
            n_classes: 8,
            n_heads_out: 2,
            pooling: Pooling::Hand,
            output_mode: OutputMode::PerFrame,
            ff_mult: 4,
            ln_eps: 1e-5,
        }
    }
}

impl FgseConfig {
    /// Hand rows pooled per graph (1 or 2); 0 for mean pooling.
    pub fn pooled_hands(&self) -> usize {
        match self.pooling {
            Pooling::Hand => self.n_heads_out.clamp(1, 2),
            Pooling::GlobalMean => 0,
        }
    }

    /// Token width of the sequence encoder.
    pub fn seq_width(&self) -> usize {
        self.d_model * self.pooled_hands().max(1)
    }

    pub fn ff_width(&self) -> usize {
        self.seq_width() * self.ff_mult
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(FgseError::Config(m));
        if self.n_graph_layers == 0 {
            return err("n_graph_layers (N) must be at least 1".into());
        }
        if self.window == 0 {
            return err("window (W) must be at least 1".into());
        }
        if self.n_seq_layers == 0 {
            return err("n_seq_layers must be at least 1".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return err(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_categories == 0 || self.n_classes == 0 {
            return err("n_categories and n_classes must be positive".into());
        }
        if !(1..=2).contains(&self.n_heads_out) {
            return err(format!("n_heads_out must be 1 or 2, got {}", self.n_heads_out));
        }
        if self.ff_mult == 0 {
            return err("ff_mult must be positive".into());
        }
        if self.ln_eps.is_nan() || self.ln_eps <= 0.0 {
            return err("ln_eps must be positive".into());
        }
        Ok(())
    }
}

/// Exact learned-scalar count for a configuration.
///
/// Graph encoder: `C·d + d` input projection, then per layer four `d×d`
/// projections with bias (query, key, value, skip), a bias-free `14×d` edge
/// projection and a `2d` layer norm. Sequence encoder with token width `p`
/// and feed-forward width `f`: `W·p` positions, per layer two `2p` norms,
/// four `p×p` projections with bias and the `p→f→p` feed-forward, then a final
/// `2p` norm. Each output head adds `p·K + K`.
pub fn count_params(cfg: &FgseConfig) -> usize {
    let d = cfg.d_model;
    let p = cfg.seq_width();
    let f = cfg.ff_width();
    let graph_layer = 4 * (d * d + d) + RELATION_COUNT * d + 2 * d;
    let graph = cfg.n_categories * d + d + cfg.n_graph_layers * graph_layer;
    let seq_layer = 2 * 2 * p + 4 * (p * p + p) + (p * f + f) + (f * p + p);
    let seq = cfg.window * p + cfg.n_seq_layers * seq_layer + 2 * p;
    let heads = cfg.n_heads_out * (p * cfg.n_classes + cfg.n_classes);
    graph + seq + heads
}
