//! Tape-level building blocks: batched graphs, edge-aware graph attention,
//! pooling and windowed self-attention.

use std::rc::Rc;

use crate::error::{FgseError, Result};
use crate::numcore::{Tape, Var};
use crate::scenegraph::{HandRole, SceneGraph, RELATION_COUNT};

/// Several scene graphs flattened into one disjoint graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub n_graphs: usize,
    pub n_nodes: usize,
    /// Category index of each node.
    pub categories: Rc<[Option<usize>]>,
    /// Graph owning each node.
    pub graph_of_node: Rc<[usize]>,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    /// `[edges × 14]` relation bits.
    pub edge_feats: Vec<f32>,
    /// Global row of the left and right hand of each graph.
    pub hands: Vec<[Option<usize>; 2]>,
}

impl GraphBatch {
    pub fn new(graphs: &[&SceneGraph], n_categories: usize) -> Result<Self> {
        let mut categories = Vec::new();
        let mut graph_of_node = Vec::new();
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut edge_feats = Vec::new();
        let mut hands = Vec::with_capacity(graphs.len());
        for (gi, g) in graphs.iter().enumerate() {
            let offset = categories.len();
            for n in &g.nodes {
                if n.cat >= n_categories {
                    return Err(FgseError::Vocabulary(format!(
                        "frame {}: category {} outside vocabulary of {n_categories}",
                        g.time_index, n.cat
                    )));
                }
                categories.push(Some(n.cat));
                graph_of_node.push(gi);
            }
            let index = g.node_index();
            if index.len() != g.nodes.len() {
                return Err(FgseError::Structure(format!(
                    "frame {}: duplicate node ids",
                    g.time_index
                )));
            }
            for e in &g.edges {
                let (Some(&s), Some(&d)) = (index.get(&e.src), index.get(&e.dst)) else {
                    return Err(FgseError::Structure(format!(
                        "frame {}: edge {} -> {} references a missing node",
                        g.time_index, e.src, e.dst
                    )));
                };
                src.push(offset + s);
                dst.push(offset + d);
                edge_feats.extend_from_slice(&e.rel.as_f32());
            }
            hands.push([
                g.hand_row(HandRole::Left).map(|r| offset + r),
                g.hand_row(HandRole::Right).map(|r| offset + r),
            ]);
        }
        Ok(GraphBatch {
            n_graphs: graphs.len(),
            n_nodes: categories.len(),
            categories: categories.into(),
            graph_of_node: graph_of_node.into(),
            src: src.into(),
            dst: dst.into(),
            edge_feats,
            hands,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

/// Tape handles for one graph-attention layer. Weights are `[in, out]`.
#[derive(Debug, Clone, Copy)]
pub struct GraphConvParams {
    pub query: (Var, Var),
    pub key: (Var, Var),
    pub value: (Var, Var),
    pub skip: (Var, Var),
    /// `[14, d]`, shared by keys and values.
    pub edge: Var,
}

/// Edge-aware multi-head graph attention:
/// `out_i = W_s x_i + Σ_{j→i} α_ij (W_v x_j + W_e e_ji)` with
/// `α_ij = softmax_j(q_i · (W_k x_j + W_e e_ji) / sqrt(d/h))` per head,
/// heads concatenated. Returns the output and, when edges exist, `α [edges × heads]`.
pub fn graph_conv_layer(
    tape: &mut Tape,
    x: Var,
    batch: &GraphBatch,
    edge_feats: Option<Var>,
    p: &GraphConvParams,
    heads: usize,
) -> Result<(Var, Option<Var>)> {
    let skip = tape.linear(x, p.skip.0, Some(p.skip.1))?;
    let Some(edge_feats) = edge_feats.filter(|_| batch.n_edges() > 0) else {
        return Ok((skip, None));
    };
    let d = tape.shape(x)[1];
    let q = tape.linear(x, p.query.0, Some(p.query.1))?;
    let k = tape.linear(x, p.key.0, Some(p.key.1))?;
    let v = tape.linear(x, p.value.0, Some(p.value.1))?;
    let e = tape.matmul(edge_feats, p.edge)?;

    let src: Rc<[Option<usize>]> = batch.src.iter().map(|&s| Some(s)).collect();
    let dst: Rc<[Option<usize>]> = batch.dst.iter().map(|&s| Some(s)).collect();
    let kj = tape.gather_rows(k, src.clone())?;
    let kj = tape.add(kj, e)?;
    let vj = tape.gather_rows(v, src)?;
    let vj = tape.add(vj, e)?;
    let qi = tape.gather_rows(q, dst)?;

    let scores = tape.head_dot(qi, kj, heads)?;
    let scores = tape.scale(scores, 1.0 / ((d / heads) as f32).sqrt());
    let alpha = tape.segment_softmax(scores, batch.dst.clone(), batch.n_nodes)?;
    let msg = tape.head_scale(vj, alpha, heads)?;
    let agg = tape.scatter_add_rows(msg, batch.dst.clone(), batch.n_nodes)?;
    Ok((tape.add(skip, agg)?, Some(alpha)))
}

pub fn edge_feature_var(tape: &mut Tape, batch: &GraphBatch) -> Result<Option<Var>> {
    if batch.n_edges() == 0 {
        return Ok(None);
    }
    tape.constant(vec![batch.n_edges(), RELATION_COUNT], batch.edge_feats.clone())
        .map(Some)
}

/// Hand rows of every graph, concatenated per graph: `[G, hands·d]`.
/// With one pooled hand the right hand is used, else the left. Missing hands are zeros.
pub fn hand_pool_batch(tape: &mut Tape, nodes: Var, batch: &GraphBatch, pooled_hands: usize) -> Result<Var> {
    let d = tape.shape(nodes)[1];
    let idx: Rc<[Option<usize>]> = batch
        .hands
        .iter()
        .flat_map(|[l, r]| match pooled_hands {
            1 => vec![r.or(*l)],
            _ => vec![*l, *r],
        })
        .collect();
    let rows = tape.gather_rows(nodes, idx)?;
    tape.reshape(rows, vec![batch.n_graphs, pooled_hands * d])
}

/// Mean node embedding of every graph: `[G, d]`.
pub fn mean_pool_batch(tape: &mut Tape, nodes: Var, batch: &GraphBatch) -> Result<Var> {
    if batch
        .graph_of_node
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        != batch.n_graphs
    {
        return Err(FgseError::Argument("global mean pooling of an empty graph".into()));
    }
    tape.segment_mean(nodes, batch.graph_of_node.clone(), batch.n_graphs)
}

/// Complete directed graph (with self loops) inside each window of `w` tokens.
#[derive(Debug, Clone)]
pub struct WindowEdges {
    pub n_tokens: usize,
    pub src: Rc<[Option<usize>]>,
    pub dst: Rc<[Option<usize>]>,
    pub dst_seg: Rc<[usize]>,
}

impl WindowEdges {
    pub fn new(n_windows: usize, w: usize) -> Self {
        let mut src = Vec::with_capacity(n_windows * w * w);
        let mut dst = Vec::with_capacity(n_windows * w * w);
        for b in 0..n_windows {
            for i in 0..w {
                for j in 0..w {
                    dst.push(b * w + i);
                    src.push(b * w + j);
                }
            }
        }
        WindowEdges {
            n_tokens: n_windows * w,
            src: src.iter().map(|&s| Some(s)).collect(),
            dst: dst.iter().map(|&s| Some(s)).collect(),
            dst_seg: dst.into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub query: (Var, Var),
    pub key: (Var, Var),
    pub value: (Var, Var),
    pub out: (Var, Var),
}

/// Bidirectional multi-head self-attention within each window.
pub fn window_self_attention(
    tape: &mut Tape,
    x: Var,
    edges: &WindowEdges,
    p: &AttentionParams,
    heads: usize,
) -> Result<Var> {
    let width = tape.shape(x)[1];
    let q = tape.linear(x, p.query.0, Some(p.query.1))?;
    let k = tape.linear(x, p.key.0, Some(p.key.1))?;
    let v = tape.linear(x, p.value.0, Some(p.value.1))?;
    let qi = tape.gather_rows(q, edges.dst.clone())?;
    let kj = tape.gather_rows(k, edges.src.clone())?;
    let vj = tape.gather_rows(v, edges.src.clone())?;
    let scores = tape.head_dot(qi, kj, heads)?;
    let scores = tape.scale(scores, 1.0 / ((width / heads) as f32).sqrt());
    let alpha = tape.segment_softmax(scores, edges.dst_seg.clone(), edges.n_tokens)?;
    let msg = tape.head_scale(vj, alpha, heads)?;
    let agg = tape.scatter_add_rows(msg, edges.dst_seg.clone(), edges.n_tokens)?;
    tape.linear(agg, p.out.0, Some(p.out.1))
}
