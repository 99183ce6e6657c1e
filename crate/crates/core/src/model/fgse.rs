use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::model::config::{count_params, FgseConfig, OutputMode, Pooling};
use crate::model::layers::{
    edge_feature_var, graph_conv_layer, hand_pool_batch, mean_pool_batch, window_self_attention, AttentionParams,
    GraphBatch, GraphConvParams, WindowEdges,
};
use crate::numcore::{self, ParamId, ParamStore, Tape, Tensor, Var};
use crate::scenegraph::{SceneGraph, Vocabulary, RELATION_COUNT};

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    Uniform(usize),
    Const(f32),
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn param_specs(cfg: &FgseConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, init: Init| specs.push(ParamSpec { name, shape, init });
    let linear = |add: &mut dyn FnMut(String, Vec<usize>, Init), prefix: String, i: usize, o: usize| {
        add(format!("{prefix}.w"), vec![i, o], Init::Uniform(i));
        add(format!("{prefix}.b"), vec![o], Init::Const(0.0));
    };
    let norm = |add: &mut dyn FnMut(String, Vec<usize>, Init), prefix: String, d: usize| {
        add(format!("{prefix}.g"), vec![d], Init::Const(1.0));
        add(format!("{prefix}.b"), vec![d], Init::Const(0.0));
    };
    let (d, p, f) = (cfg.d_model, cfg.seq_width(), cfg.ff_width());

    add(
        "graph.input.w".into(),
        vec![cfg.n_categories, d],
        Init::Uniform(cfg.n_categories),
    );
    add("graph.input.b".into(), vec![d], Init::Const(0.0));
    for l in 0..cfg.n_graph_layers {
        for proj in ["query", "key", "value", "skip"] {
            linear(&mut add, format!("graph.{l}.{proj}"), d, d);
        }
        add(
            format!("graph.{l}.edge.w"),
            vec![RELATION_COUNT, d],
            Init::Uniform(RELATION_COUNT),
        );
        norm(&mut add, format!("graph.{l}.norm"), d);
    }
    add("seq.position".into(), vec![cfg.window, p], Init::Uniform(p));
    for l in 0..cfg.n_seq_layers {
        norm(&mut add, format!("seq.{l}.norm1"), p);
        for proj in ["query", "key", "value", "out"] {
            linear(&mut add, format!("seq.{l}.{proj}"), p, p);
        }
        norm(&mut add, format!("seq.{l}.norm2"), p);
        linear(&mut add, format!("seq.{l}.ff1"), p, f);
        linear(&mut add, format!("seq.{l}.ff2"), f, p);
    }
    norm(&mut add, "seq.norm".into(), p);
    for h in 0..cfg.n_heads_out {
        linear(&mut add, format!("head.{h}"), p, cfg.n_classes);
    }
    specs
}

type Lin = (ParamId, ParamId);

#[derive(Debug, Clone)]
struct GraphLayerIds {
    query: Lin,
    key: Lin,
    value: Lin,
    skip: Lin,
    edge: ParamId,
    norm: Lin,
}

#[derive(Debug, Clone)]
struct SeqLayerIds {
    norm1: Lin,
    query: Lin,
    key: Lin,
    value: Lin,
    out: Lin,
    norm2: Lin,
    ff1: Lin,
    ff2: Lin,
}

#[derive(Debug, Clone)]
struct Layout {
    input: Lin,
    graph: Vec<GraphLayerIds>,
    position: ParamId,
    seq: Vec<SeqLayerIds>,
    norm: Lin,
    heads: Vec<Lin>,
}

impl Layout {
    fn resolve(cfg: &FgseConfig, store: &ParamStore) -> Result<Layout> {
        let id = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| FgseError::Checkpoint(format!("missing parameter {name}")))
        };
        let pair = |prefix: String, a: &str, b: &str| -> Result<Lin> {
            Ok((id(format!("{prefix}.{a}"))?, id(format!("{prefix}.{b}"))?))
        };
        let lin = |prefix: String| pair(prefix, "w", "b");
        let norm = |prefix: String| pair(prefix, "g", "b");
        Ok(Layout {
            input: lin("graph.input".into())?,
            graph: (0..cfg.n_graph_layers)
                .map(|l| {
                    Ok(GraphLayerIds {
                        query: lin(format!("graph.{l}.query"))?,
                        key: lin(format!("graph.{l}.key"))?,
                        value: lin(format!("graph.{l}.value"))?,
                        skip: lin(format!("graph.{l}.skip"))?,
                        edge: id(format!("graph.{l}.edge.w"))?,
                        norm: norm(format!("graph.{l}.norm"))?,
                    })
                })
                .collect::<Result<_>>()?,
            position: id("seq.position".into())?,
            seq: (0..cfg.n_seq_layers)
                .map(|l| {
                    Ok(SeqLayerIds {
                        norm1: norm(format!("seq.{l}.norm1"))?,
                        query: lin(format!("seq.{l}.query"))?,
                        key: lin(format!("seq.{l}.key"))?,
                        value: lin(format!("seq.{l}.value"))?,
                        out: lin(format!("seq.{l}.out"))?,
                        norm2: norm(format!("seq.{l}.norm2"))?,
                        ff1: lin(format!("seq.{l}.ff1"))?,
                        ff2: lin(format!("seq.{l}.ff2"))?,
                    })
                })
                .collect::<Result<_>>()?,
            norm: norm("seq.norm".into())?,
            heads: (0..cfg.n_heads_out)
                .map(|h| lin(format!("head.{h}")))
                .collect::<Result<_>>()?,
        })
    }
}

/// Parameters recorded on a tape for one pass.
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps vars recorded in parameter-store order.
    pub fn from_vars(vars: Vec<Var>) -> Bound {
        Bound(vars)
    }

    fn get(&self, id: ParamId) -> Var {
        self.0[id.index()]
    }

    fn lin(&self, l: Lin) -> (Var, Var) {
        (self.get(l.0), self.get(l.1))
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Predictions of one window at given positions inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    /// `(position in window, per-head softmax rows)`.
    pub rows: Vec<(usize, Vec<Vec<f32>>)>,
}

impl WindowOutput {
    pub fn argmax(&self, row: usize, head: usize) -> usize {
        argmax(&self.rows[row].1[head])
    }
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Metadata stored next to the parameters in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: FgseConfig,
    #[serde(default)]
    pub vocab: Option<Vocabulary>,
    /// Temporal downsampling factor the model was trained at.
    #[serde(default = "one")]
    pub downsample: usize,
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn one() -> usize {
    1
}

/// Graph encoder, pooling, sequence encoder and per-hand linear heads.
#[derive(Debug, Clone)]
pub struct FgseModel {
    config: FgseConfig,
    params: ParamStore,
    layout: Layout,
}

impl FgseModel {
    pub fn new(config: FgseConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for spec in param_specs(&config) {
            match spec.init {
                Init::Uniform(fan_in) => params.init_uniform(spec.name, &spec.shape, fan_in, &mut rng)?,
                Init::Const(v) => params.init_const(spec.name, &spec.shape, v)?,
            };
        }
        let layout = Layout::resolve(&config, &params)?;
        Ok(FgseModel { config, params, layout })
    }

    /// Wraps an existing parameter set, checking names and shapes against the config.
    pub fn from_params(config: FgseConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(FgseError::Checkpoint(format!(
                "config expects {} parameter tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for spec in &specs {
            let t = params
                .by_name(&spec.name)
                .ok_or_else(|| FgseError::Checkpoint(format!("missing parameter {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(FgseError::Checkpoint(format!(
                    "parameter {} has shape {:?}, config expects {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
        }
        let layout = Layout::resolve(&config, &params)?;
        Ok(FgseModel { config, params, layout })
    }

    /// Same parameters under another output mode.
    pub fn with_output_mode(&self, mode: OutputMode) -> Result<FgseModel> {
        let config = FgseConfig {
            output_mode: mode,
            ..self.config
        };
        FgseModel::from_params(config, self.params.clone())
    }

    pub fn config(&self) -> &FgseConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        debug_assert_eq!(self.params.scalar_count(), count_params(&self.config));
        self.params.scalar_count()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        Bound(self.params.bind(tape, trainable))
    }

    /// Node embeddings `[nodes, d]` for a batch of graphs.
    pub fn encode_graphs(&self, tape: &mut Tape, b: &Bound, batch: &GraphBatch) -> Result<Var> {
        let (w_in, b_in) = b.lin(self.layout.input);
        let x = tape.gather_rows(w_in, batch.categories.clone())?;
        let mut x = tape.add_bias(x, b_in)?;
        let edge_feats = edge_feature_var(tape, batch)?;
        for l in &self.layout.graph {
            let p = GraphConvParams {
                query: b.lin(l.query),
                key: b.lin(l.key),
                value: b.lin(l.value),
                skip: b.lin(l.skip),
                edge: b.get(l.edge),
            };
            let (h, _) = graph_conv_layer(tape, x, batch, edge_feats, &p, self.config.n_heads)?;
            let h = tape.selu(h);
            let (g, bn) = b.lin(l.norm);
            x = tape.layer_norm(h, g, bn, self.config.ln_eps)?;
        }
        Ok(x)
    }

    /// Graph-level tokens `[graphs, p]`.
    pub fn pool(&self, tape: &mut Tape, nodes: Var, batch: &GraphBatch) -> Result<Var> {
        match self.config.pooling {
            Pooling::Hand => hand_pool_batch(tape, nodes, batch, self.config.pooled_hands()),
            Pooling::GlobalMean => mean_pool_batch(tape, nodes, batch),
        }
    }

    /// Adds positions and runs the pre-norm encoder over `n_windows` stacked windows.
    pub fn encode_sequence(&self, tape: &mut Tape, b: &Bound, tokens: Var, n_windows: usize) -> Result<Var> {
        let w = self.config.window;
        let p = self.config.seq_width();
        if tape.shape(tokens) != [n_windows * w, p] {
            return Err(FgseError::shape(
                "sequence_encode",
                tape.shape(tokens),
                &[n_windows * w, p],
            ));
        }
        let positions: Rc<[Option<usize>]> = (0..n_windows).flat_map(|_| (0..w).map(Some)).collect();
        let pos = tape.gather_rows(b.get(self.layout.position), positions)?;
        let mut x = tape.add(tokens, pos)?;
        let edges = WindowEdges::new(n_windows, w);
        let eps = self.config.ln_eps;
        for l in &self.layout.seq {
            let (g1, b1) = b.lin(l.norm1);
            let h = tape.layer_norm(x, g1, b1, eps)?;
            let attn = AttentionParams {
                query: b.lin(l.query),
                key: b.lin(l.key),
                value: b.lin(l.value),
                out: b.lin(l.out),
            };
            let a = window_self_attention(tape, h, &edges, &attn, self.config.n_heads)?;
            x = tape.add(x, a)?;
            let (g2, b2) = b.lin(l.norm2);
            let h = tape.layer_norm(x, g2, b2, eps)?;
            let (w1, bias1) = b.lin(l.ff1);
            let h = tape.linear(h, w1, Some(bias1))?;
            let h = tape.selu(h);
            let (w2, bias2) = b.lin(l.ff2);
            let h = tape.linear(h, w2, Some(bias2))?;
            x = tape.add(x, h)?;
        }
        let (g, bn) = b.lin(self.layout.norm);
        tape.layer_norm(x, g, bn, eps)
    }

    /// Logits per output head: `[windows·W, K]`, or `[windows, K]` in single mode.
    pub fn head_logits(&self, tape: &mut Tape, b: &Bound, encoded: Var, n_windows: usize) -> Result<Vec<Var>> {
        let features = match self.config.output_mode {
            OutputMode::Single => {
                let w = self.config.window;
                let seg: Rc<[usize]> = (0..n_windows).flat_map(|i| std::iter::repeat_n(i, w)).collect();
                tape.segment_mean(encoded, seg, n_windows)?
            }
            OutputMode::PerFrame | OutputMode::Center => encoded,
        };
        self.layout
            .heads
            .iter()
            .map(|&h| {
                let (w, bias) = b.lin(h);
                tape.linear(features, w, Some(bias))
            })
            .collect()
    }

    /// Full path from windows of graphs to per-head logits.
    pub fn window_logits(&self, tape: &mut Tape, b: &Bound, windows: &[&[SceneGraph]]) -> Result<Vec<Var>> {
        let w = self.config.window;
        if let Some(bad) = windows.iter().find(|win| win.len() != w) {
            return Err(FgseError::Argument(format!(
                "window has {} graphs, model expects {w}",
                bad.len()
            )));
        }
        let graphs: Vec<&SceneGraph> = windows.iter().flat_map(|win| win.iter()).collect();
        let batch = GraphBatch::new(&graphs, self.config.n_categories)?;
        let nodes = self.encode_graphs(tape, b, &batch)?;
        let tokens = self.pool(tape, nodes, &batch)?;
        let encoded = self.encode_sequence(tape, b, tokens, windows.len())?;
        self.head_logits(tape, b, encoded, windows.len())
    }

    /// Cross-entropy averaged over heads and predicted rows.
    /// `labels[window][head][frame]`; single mode scores the window's last frame.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        b: &Bound,
        windows: &[&[SceneGraph]],
        labels: &[Vec<Vec<usize>>],
    ) -> Result<(Var, Vec<Var>)> {
        let logits = self.window_logits(tape, b, windows)?;
        let mut total: Option<Var> = None;
        for (h, &lg) in logits.iter().enumerate() {
            let targets: Vec<usize> = labels
                .iter()
                .flat_map(|per_head| {
                    let l = &per_head[h];
                    match self.config.output_mode {
                        OutputMode::Single => vec![*l.last().expect("non-empty window")],
                        _ => l.clone(),
                    }
                })
                .collect();
            let ce = tape.cross_entropy(lg, &targets)?;
            total = Some(match total {
                None => ce,
                Some(t) => tape.add(t, ce)?,
            });
        }
        let total = total.expect("at least one head");
        let loss = tape.scale(total, 1.0 / logits.len() as f32);
        Ok((loss, logits))
    }

    /// Mean cross-entropy of one window against `labels[head][frame]`.
    pub fn window_loss(&self, window: &[SceneGraph], labels: &[Vec<usize>]) -> Result<f32> {
        if labels.len() != self.config.n_heads_out || labels.iter().any(|l| l.len() != window.len()) {
            return Err(FgseError::Argument(format!(
                "labels must be {} streams of {} frames",
                self.config.n_heads_out,
                window.len()
            )));
        }
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let (loss, _) = self.batch_loss(&mut tape, &b, &[window], &[labels.to_vec()])?;
        Ok(tape.scalar(loss))
    }

    /// Node embeddings `[n, d]` of one graph.
    pub fn graph_encode(&self, g: &SceneGraph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let batch = GraphBatch::new(&[g], self.config.n_categories)?;
        let nodes = self.encode_graphs(&mut tape, &b, &batch)?;
        Ok(tape.to_tensor(nodes))
    }

    /// Pooled token of one graph, the unit cached by streaming inference.
    pub fn embed_frame(&self, g: &SceneGraph) -> Result<Vec<f32>> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let batch = GraphBatch::new(&[g], self.config.n_categories)?;
        let nodes = self.encode_graphs(&mut tape, &b, &batch)?;
        let tok = self.pool(&mut tape, nodes, &batch)?;
        Ok(tape.value(tok).to_vec())
    }

    /// Encoder output `[W, p]` for a window of pooled tokens.
    pub fn sequence_encode(&self, z: &Tensor) -> Result<Tensor> {
        let (w, p) = (self.config.window, self.config.seq_width());
        if z.shape() != [w, p] {
            return Err(FgseError::shape("sequence_encode", z.shape(), &[w, p]));
        }
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let tokens = tape.leaf(z);
        let out = self.encode_sequence(&mut tape, &b, tokens, 1)?;
        Ok(tape.to_tensor(out))
    }

    /// Window predictions from already pooled tokens, one row per frame.
    pub fn predict_from_embeddings(&self, rows: &[&[f32]]) -> Result<WindowOutput> {
        let (w, p) = (self.config.window, self.config.seq_width());
        if rows.len() != w || rows.iter().any(|r| r.len() != p) {
            return Err(FgseError::Argument(format!("expected {w} token rows of width {p}")));
        }
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let tokens = tape.constant(vec![w, p], rows.concat())?;
        let encoded = self.encode_sequence(&mut tape, &b, tokens, 1)?;
        let logits = self.head_logits(&mut tape, &b, encoded, 1)?;
        Ok(self.collect_output(&mut tape, &logits))
    }

    /// Softmax predictions for one window of `W` graphs.
    pub fn forward(&self, window: &[SceneGraph]) -> Result<WindowOutput> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let logits = self.window_logits(&mut tape, &b, &[window])?;
        Ok(self.collect_output(&mut tape, &logits))
    }

    fn collect_output(&self, tape: &mut Tape, logits: &[Var]) -> WindowOutput {
        let probs: Vec<Var> = logits.iter().map(|&l| tape.softmax(l)).collect();
        let k = self.config.n_classes;
        let per_row = |r: usize| -> Vec<Vec<f32>> {
            probs
                .iter()
                .map(|&p| tape.value(p)[r * k..(r + 1) * k].to_vec())
                .collect()
        };
        let w = self.config.window;
        let rows = match self.config.output_mode {
            OutputMode::PerFrame => (0..w).map(|r| (r, per_row(r))).collect(),
            OutputMode::Center => vec![(w / 2, per_row(w / 2))],
            OutputMode::Single => vec![(w - 1, per_row(0))],
        };
        WindowOutput { rows }
    }

    pub fn checkpoint_meta(&self, vocab: Option<Vocabulary>, downsample: usize) -> CheckpointMeta {
        CheckpointMeta {
            config: self.config,
            vocab,
            downsample,
            extra: serde_json::Value::Null,
        }
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        if meta.config != self.config {
            return Err(FgseError::Checkpoint(
                "checkpoint metadata config differs from the model".into(),
            ));
        }
        numcore::save_checkpoint(path, &self.params, serde_json::to_value(meta)?)
    }

    pub fn load(path: &Path) -> Result<(FgseModel, CheckpointMeta)> {
        let (params, hyper) = numcore::load_checkpoint(path)?;
        let meta: CheckpointMeta =
            serde_json::from_value(hyper).map_err(|e| FgseError::Checkpoint(format!("hyperparameters: {e}")))?;
        Ok((FgseModel::from_params(meta.config, params)?, meta))
    }
}
