//! Scene-graph data model, relation extraction from boxes, dataset ingestion
//! and sequence augmentation.

mod augment;
mod dataset;
mod graph;
mod relations;

pub use augment::{downsample, mirror_graph_sequence, upsample_predictions};
pub use dataset::{
    load_dataset, load_native, DatasetFormat, EpisodeDataset, FrameRecord, Vocabulary, GRAPHS_FILE, VOCAB_FILE,
    VOCAB_FORMAT,
};
pub use graph::{
    build_graph_stream, build_scene_graph, GraphEdge, GraphNode, GraphSequence, HandRole, ObjectTrack, SceneGraph,
};
pub use relations::{
    compute_dynamic_relations, compute_static_relations, Box3, Relation, RelationThresholds, RelationVector,
    RELATION_COUNT,
};
