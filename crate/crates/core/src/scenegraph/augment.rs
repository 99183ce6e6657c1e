use crate::error::{FgseError, Result};
use crate::scenegraph::graph::GraphSequence;

/// Swaps hand roles, the two per-hand label streams, and the lateral relation bits.
pub fn mirror_graph_sequence(s: &GraphSequence) -> Result<GraphSequence> {
    if s.labels.len() != 2 {
        return Err(FgseError::Unsupported(format!(
            "mirroring needs a bimanual sequence with two label streams, episode {} has {}",
            s.episode,
            s.labels.len()
        )));
    }
    let mut out = s.clone();
    for g in &mut out.graphs {
        for n in &mut g.nodes {
            n.hand = n.hand.mirrored();
        }
        for e in &mut g.edges {
            e.rel = e.rel.mirrored();
        }
    }
    out.labels.swap(0, 1);
    Ok(out)
}

/// Keeps every `factor`-th frame starting with the first; fps scales down accordingly.
pub fn downsample(s: &GraphSequence, factor: usize) -> Result<GraphSequence> {
    if factor == 0 {
        return Err(FgseError::Argument("downsample factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(s.clone());
    }
    Ok(GraphSequence {
        episode: s.episode.clone(),
        subject: s.subject,
        fps: s.fps / factor as f64,
        graphs: s.graphs.iter().step_by(factor).cloned().collect(),
        labels: s
            .labels
            .iter()
            .map(|l| l.iter().step_by(factor).copied().collect())
            .collect(),
    })
}

/// Repeats each reduced-rate label over its `factor`-frame span, truncated to `original_len`.
pub fn upsample_predictions<T: Clone>(preds: &[T], factor: usize, original_len: usize) -> Result<Vec<T>> {
    if factor == 0 {
        return Err(FgseError::Argument("upsample factor must be at least 1".into()));
    }
    if original_len.div_ceil(factor) != preds.len() {
        return Err(FgseError::Argument(format!(
            "{} predictions cannot cover {original_len} frames at factor {factor}",
            preds.len()
        )));
    }
    Ok(preds
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.clone(), factor))
        .take(original_len)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::graph::{GraphEdge, GraphNode, HandRole, SceneGraph};
    use crate::scenegraph::relations::{Relation, RelationVector};

    fn seq(frames: usize, heads: usize) -> GraphSequence {
        let graphs = (0..frames as u64)
            .map(|t| SceneGraph {
                time_index: t,
                nodes: vec![
                    GraphNode {
                        id: 0,
                        cat: 0,
                        hand: HandRole::Left,
                    },
                    GraphNode {
                        id: 1,
                        cat: 0,
                        hand: HandRole::Right,
                    },
                    GraphNode {
                        id: 2,
                        cat: 1,
                        hand: HandRole::None,
                    },
                ],
                edges: vec![GraphEdge {
                    src: 0,
                    dst: 2,
                    rel: RelationVector::from_relations(&[Relation::LeftOf, Relation::Touching]),
                }],
            })
            .collect();
        GraphSequence {
            episode: "e".into(),
            subject: 1,
            fps: 30.0,
            graphs,
            labels: (0..heads).map(|h| (0..frames).map(|t| (t + h) % 4).collect()).collect(),
        }
    }

    #[test]
    fn mirror_swaps_and_is_involution() {
        let mut s = seq(4, 2);
        s.labels = vec![vec![2; 4], vec![0; 4]];
        let m = mirror_graph_sequence(&s).unwrap();
        assert_eq!(m.labels, vec![vec![0; 4], vec![2; 4]]);
        assert_eq!(m.graphs[0].nodes[0].hand, HandRole::Right);
        let rel = m.graphs[0].edges[0].rel;
        assert!(rel.get(Relation::RightOf) && !rel.get(Relation::LeftOf) && rel.get(Relation::Touching));
        assert_eq!(m.graphs[0].nodes.len(), 3);
        assert_eq!(m.graphs[0].edges.len(), 1);
        assert_eq!(mirror_graph_sequence(&m).unwrap(), s);
    }

    #[test]
    fn mirror_requires_two_heads() {
        assert!(matches!(
            mirror_graph_sequence(&seq(3, 1)),
            Err(FgseError::Unsupported(_))
        ));
    }

    #[test]
    fn downsample_examples() {
        let s = seq(90, 2);
        assert_eq!(downsample(&s, 1).unwrap(), s);
        let d = downsample(&s, 3).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d.fps, 10.0);
        for i in 0..d.len() {
            assert_eq!(d.frame_labels(i), s.frame_labels(3 * i));
            assert_eq!(d.graphs[i].time_index, 3 * i as u64);
        }
        assert!(downsample(&s, 0).is_err());
    }

    #[test]
    fn upsample_examples() {
        assert_eq!(
            upsample_predictions(&['a', 'b'], 3, 6).unwrap(),
            vec!['a', 'a', 'a', 'b', 'b', 'b']
        );
        assert_eq!(
            upsample_predictions(&['a', 'b'], 3, 5).unwrap(),
            vec!['a', 'a', 'a', 'b', 'b']
        );
        assert_eq!(upsample_predictions(&['a', 'b'], 1, 2).unwrap(), vec!['a', 'b']);
        assert!(upsample_predictions(&['a', 'b'], 3, 7).is_err());
    }
}
