use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::scenegraph::relations::{
    compute_dynamic_relations, compute_static_relations, Box3, RelationThresholds, RelationVector,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandRole {
    #[default]
    None,
    Left,
    Right,
}

impl HandRole {
    pub fn mirrored(self) -> HandRole {
        match self {
            HandRole::None => HandRole::None,
            HandRole::Left => HandRole::Right,
            HandRole::Right => HandRole::Left,
        }
    }

    pub fn parse(s: &str) -> Option<HandRole> {
        match s {
            "none" => Some(HandRole::None),
            "left" => Some(HandRole::Left),
            "right" => Some(HandRole::Right),
            _ => None,
        }
    }
}

/// One object's box in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub object_id: u32,
    pub category: usize,
    #[serde(rename = "box")]
    pub bbox: Box3,
    #[serde(default)]
    pub hand_role: HandRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: u32,
    pub cat: usize,
    #[serde(default)]
    pub hand: HandRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: u32,
    pub dst: u32,
    pub rel: RelationVector,
}

/// Objects of one frame as nodes, directed relation edges between them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub time_index: u64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SceneGraph {
    /// Checks node-id uniqueness, edge endpoints, hand uniqueness and the category range.
    pub fn validate(&self, n_categories: usize) -> Result<()> {
        let mut ids = HashSet::new();
        let (mut left, mut right) = (0, 0);
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(FgseError::Structure(format!(
                    "frame {}: duplicate node id {}",
                    self.time_index, n.id
                )));
            }
            if n.cat >= n_categories {
                return Err(FgseError::Vocabulary(format!(
                    "frame {}: category {} outside vocabulary of {n_categories}",
                    self.time_index, n.cat
                )));
            }
            match n.hand {
                HandRole::Left => left += 1,
                HandRole::Right => right += 1,
                HandRole::None => {}
            }
        }
        if left > 1 || right > 1 {
            return Err(FgseError::Structure(format!(
                "frame {}: more than one node per hand role",
                self.time_index
            )));
        }
        for e in &self.edges {
            if !ids.contains(&e.src) || !ids.contains(&e.dst) {
                return Err(FgseError::Structure(format!(
                    "frame {}: edge {} -> {} references a missing node",
                    self.time_index, e.src, e.dst
                )));
            }
        }
        Ok(())
    }

    /// Row index of every node id.
    pub fn node_index(&self) -> HashMap<u32, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect()
    }

    pub fn hand_row(&self, role: HandRole) -> Option<usize> {
        self.nodes.iter().position(|n| n.hand == role && role != HandRole::None)
    }

    pub fn edge(&self, src: u32, dst: u32) -> Option<&GraphEdge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }
}

/// Time-ordered graphs of one recorded episode, with one label stream per head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSequence {
    pub episode: String,
    pub subject: u32,
    pub fps: f64,
    pub graphs: Vec<SceneGraph>,
    /// `labels[head][frame]`.
    pub labels: Vec<Vec<usize>>,
}

impl GraphSequence {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn head_count(&self) -> usize {
        self.labels.len()
    }

    pub fn frame_labels(&self, frame: usize) -> Vec<usize> {
        self.labels.iter().map(|l| l[frame]).collect()
    }

    pub fn validate(&self, n_categories: usize, n_classes: usize) -> Result<()> {
        for (h, l) in self.labels.iter().enumerate() {
            if l.len() != self.graphs.len() {
                return Err(FgseError::Structure(format!(
                    "episode {}: head {h} has {} labels for {} graphs",
                    self.episode,
                    l.len(),
                    self.graphs.len()
                )));
            }
            if let Some(&bad) = l.iter().find(|&&c| c >= n_classes) {
                return Err(FgseError::Index {
                    what: "label class",
                    index: bad,
                    len: n_classes,
                });
            }
        }
        for w in self.graphs.windows(2) {
            if w[1].time_index <= w[0].time_index {
                return Err(FgseError::Structure(format!(
                    "episode {}: time index {} does not increase after {}",
                    self.episode, w[1].time_index, w[0].time_index
                )));
            }
        }
        if self.fps.is_nan() || self.fps <= 0.0 {
            return Err(FgseError::Structure(format!(
                "episode {}: fps must be positive",
                self.episode
            )));
        }
        self.graphs.iter().try_for_each(|g| g.validate(n_categories))
    }
}

fn check_frame(frame: &[ObjectTrack]) -> Result<()> {
    let mut ids = HashSet::new();
    let (mut left, mut right) = (0, 0);
    for o in frame {
        if !ids.insert(o.object_id) {
            return Err(FgseError::Structure(format!(
                "duplicate object id {} in frame",
                o.object_id
            )));
        }
        if !o.bbox.is_valid() {
            return Err(FgseError::Structure(format!(
                "object {} has a non-positive or non-finite box",
                o.object_id
            )));
        }
        match o.hand_role {
            HandRole::Left => left += 1,
            HandRole::Right => right += 1,
            HandRole::None => {}
        }
    }
    if left > 1 || right > 1 {
        return Err(FgseError::Structure("more than one object per hand role".into()));
    }
    Ok(())
}

/// Builds one frame's graph. Pairs whose centers are further apart than
/// `max_edge_distance` get no edge; all others get edges in both directions.
/// Dynamic bits need both objects in `prev_frame` and are clear otherwise.
pub fn build_scene_graph(
    time_index: u64,
    frame: &[ObjectTrack],
    prev_frame: Option<&[ObjectTrack]>,
    cfg: &RelationThresholds,
) -> Result<SceneGraph> {
    if frame.is_empty() {
        return Err(FgseError::Argument(format!("frame {time_index} has no objects")));
    }
    check_frame(frame)?;
    let prev: HashMap<u32, &Box3> = prev_frame
        .unwrap_or_default()
        .iter()
        .map(|o| (o.object_id, &o.bbox))
        .collect();

    let nodes = frame
        .iter()
        .map(|o| GraphNode {
            id: o.object_id,
            cat: o.category,
            hand: o.hand_role,
        })
        .collect();
    let mut edges = Vec::new();
    for a in frame {
        for b in frame {
            if a.object_id == b.object_id || a.bbox.center_distance(&b.bbox) > cfg.max_edge_distance {
                continue;
            }
            let mut rel = compute_static_relations(&a.bbox, &b.bbox, cfg);
            if let (Some(ap), Some(bp)) = (prev.get(&a.object_id), prev.get(&b.object_id)) {
                rel = rel.union(compute_dynamic_relations(ap, &a.bbox, bp, &b.bbox, cfg));
            }
            edges.push(GraphEdge {
                src: a.object_id,
                dst: b.object_id,
                rel,
            });
        }
    }
    Ok(SceneGraph {
        time_index,
        nodes,
        edges,
    })
}

/// Builds graphs for consecutive frames; the first frame has no dynamic bits.
pub fn build_graph_stream(
    frames: &[Vec<ObjectTrack>],
    first_time_index: u64,
    cfg: &RelationThresholds,
) -> Result<Vec<SceneGraph>> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let prev = i.checked_sub(1).map(|p| frames[p].as_slice());
            build_scene_graph(first_time_index + i as u64, f, prev, cfg)
        })
        .collect()
}
