//! Episode datasets and their on-disk formats.
//!
//! The native layout is a directory holding `graphs.jsonl` (one frame per
//! line) and a `vocab.json` sidecar with object, action and relation names.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FgseError, Result};
use crate::scenegraph::graph::{
    build_scene_graph, GraphEdge, GraphNode, GraphSequence, HandRole, ObjectTrack, SceneGraph,
};
use crate::scenegraph::relations::{Box3, Relation, RelationThresholds, RelationVector};

pub const VOCAB_FORMAT: &str = "fgse-vocab-v1";
pub const GRAPHS_FILE: &str = "graphs.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";

/// Object, action and relation names shared by a dataset and the models trained on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub format: String,
    /// Relation names in bit order.
    pub relations: Vec<String>,
    pub objects: Vec<String>,
    pub actions: Vec<String>,
    /// One entry per label stream, e.g. `["left", "right"]`.
    pub heads: Vec<String>,
    /// For merged action-object labels: the `(action, object)` pair behind each class.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_pairs: Vec<(String, String)>,
}

impl Vocabulary {
    pub fn new(objects: Vec<String>, actions: Vec<String>, heads: Vec<String>) -> Self {
        Vocabulary {
            format: VOCAB_FORMAT.to_string(),
            relations: Relation::names(),
            objects,
            actions,
            heads,
            label_pairs: Vec::new(),
        }
    }

    pub fn bimanual_heads() -> Vec<String> {
        vec!["left".into(), "right".into()]
    }

    pub fn n_categories(&self) -> usize {
        self.objects.len()
    }

    pub fn n_classes(&self) -> usize {
        self.actions.len()
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != VOCAB_FORMAT {
            return Err(FgseError::Vocabulary(format!(
                "unsupported vocabulary format {:?}",
                self.format
            )));
        }
        if self.relations != Relation::names() {
            return Err(FgseError::Vocabulary(
                "relation names or ordering differ from the built-in 14-relation ordering".into(),
            ));
        }
        if self.objects.is_empty() || self.actions.is_empty() {
            return Err(FgseError::Vocabulary(
                "object and action lists must be non-empty".into(),
            ));
        }
        if !(1..=2).contains(&self.heads.len()) {
            return Err(FgseError::Vocabulary(format!(
                "expected 1 or 2 heads, got {}",
                self.heads.len()
            )));
        }
        Ok(())
    }
}

/// Labeled graph sequences grouped by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDataset {
    pub sequences: Vec<GraphSequence>,
    pub subjects: Vec<u32>,
    pub vocab: Vocabulary,
    pub head_count: usize,
}

impl EpisodeDataset {
    pub fn new(sequences: Vec<GraphSequence>, vocab: Vocabulary) -> Result<Self> {
        vocab.validate()?;
        for s in &sequences {
            if s.head_count() != vocab.head_count() {
                return Err(FgseError::Structure(format!(
                    "episode {} has {} label streams, vocabulary declares {}",
                    s.episode,
                    s.head_count(),
                    vocab.head_count()
                )));
            }
            s.validate(vocab.n_categories(), vocab.n_classes())?;
        }
        let subjects: BTreeSet<u32> = sequences.iter().map(|s| s.subject).collect();
        Ok(EpisodeDataset {
            head_count: vocab.head_count(),
            subjects: subjects.into_iter().collect(),
            sequences,
            vocab,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.n_classes()
    }

    pub fn n_categories(&self) -> usize {
        self.vocab.n_categories()
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(GraphSequence::len).sum()
    }

    /// SHA-256 over the native serialization; stable for identical content.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.vocab).expect("vocabulary serializes"));
        for s in &self.sequences {
            for line in native_lines(s) {
                h.update(line.as_bytes());
                h.update(b"\n");
            }
        }
        format!("{:x}", h.finalize())
    }

    pub fn write_native(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| FgseError::io(dir, e))?;
        let vocab_path = dir.join(VOCAB_FILE);
        fs::write(&vocab_path, serde_json::to_string_pretty(&self.vocab)?)
            .map_err(|e| FgseError::io(&vocab_path, e))?;
        let graphs_path = dir.join(GRAPHS_FILE);
        let file = fs::File::create(&graphs_path).map_err(|e| FgseError::io(&graphs_path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for s in &self.sequences {
            for line in native_lines(s) {
                writeln!(w, "{line}").map_err(|e| FgseError::io(&graphs_path, e))?;
            }
        }
        w.flush().map_err(|e| FgseError::io(&graphs_path, e))
    }
}

/// One line of the native stream format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    #[serde(default)]
    pub episode: String,
    pub t: u64,
    #[serde(default)]
    pub subject: u32,
    pub fps: f64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    #[serde(default)]
    pub labels: Vec<usize>,
}

impl FrameRecord {
    pub fn graph(&self) -> SceneGraph {
        SceneGraph {
            time_index: self.t,
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn parse_line(path: &Path, line_no: usize, line: &str) -> Result<FrameRecord> {
        serde_json::from_str(line).map_err(|e| FgseError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })
    }
}

fn native_lines(s: &GraphSequence) -> impl Iterator<Item = String> + '_ {
    s.graphs.iter().enumerate().map(move |(i, g)| {
        let rec = FrameRecord {
            episode: s.episode.clone(),
            t: g.time_index,
            subject: s.subject,
            fps: s.fps,
            nodes: g.nodes.clone(),
            edges: g.edges.clone(),
            labels: s.frame_labels(i),
        };
        serde_json::to_string(&rec).expect("frame record serializes")
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    BimacsJson,
    CoaxBoxes,
    FgseJsonl,
}

impl FromStr for DatasetFormat {
    type Err = FgseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimacs-json" => Ok(DatasetFormat::BimacsJson),
            "coax-boxes" => Ok(DatasetFormat::CoaxBoxes),
            "fgse-jsonl" => Ok(DatasetFormat::FgseJsonl),
            other => Err(FgseError::Argument(format!(
                "unknown dataset format {other:?} (expected bimacs-json, coax-boxes or fgse-jsonl)"
            ))),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::BimacsJson => "bimacs-json",
            DatasetFormat::CoaxBoxes => "coax-boxes",
            DatasetFormat::FgseJsonl => "fgse-jsonl",
        })
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat, cfg: &RelationThresholds) -> Result<EpisodeDataset> {
    match format {
        DatasetFormat::FgseJsonl => load_native(path),
        DatasetFormat::BimacsJson => load_bimacs(path, cfg),
        DatasetFormat::CoaxBoxes => load_coax(path, cfg),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FgseError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FgseError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

pub fn load_native(dir: &Path) -> Result<EpisodeDataset> {
    let vocab: Vocabulary = read_json(&dir.join(VOCAB_FILE))?;
    vocab.validate()?;
    let graphs_path = dir.join(GRAPHS_FILE);
    let text = fs::read_to_string(&graphs_path).map_err(|e| FgseError::io(&graphs_path, e))?;
    let mut sequences: Vec<GraphSequence> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = FrameRecord::parse_line(&graphs_path, i + 1, line)?;
        if rec.labels.len() != vocab.head_count() {
            return Err(FgseError::Parse {
                path: graphs_path.clone(),
                line: i + 1,
                msg: format!("expected {} labels, found {}", vocab.head_count(), rec.labels.len()),
            });
        }
        let continues = sequences.last().is_some_and(|s| s.episode == rec.episode);
        if !continues {
            if !seen.insert(rec.episode.clone()) {
                return Err(FgseError::Parse {
                    path: graphs_path.clone(),
                    line: i + 1,
                    msg: format!("episode {:?} is split across non-contiguous lines", rec.episode),
                });
            }
            sequences.push(GraphSequence {
                episode: rec.episode.clone(),
                subject: rec.subject,
                fps: rec.fps,
                graphs: Vec::new(),
                labels: vec![Vec::new(); vocab.head_count()],
            });
        }
        let s = sequences.last_mut().expect("sequence pushed above");
        s.graphs.push(rec.graph());
        for (h, l) in rec.labels.iter().enumerate() {
            s.labels[h].push(*l);
        }
    }
    EpisodeDataset::new(sequences, vocab)
}

/// Vocabulary file accompanying external (bimacs-json, coax-boxes) inputs.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceVocab {
    objects: Vec<String>,
    actions: Vec<String>,
    /// Object class names that denote a hand, with their side.
    #[serde(default)]
    hands: BTreeMap<String, HandRole>,
    /// Source relation name -> built-in relation name; `null` drops the relation.
    #[serde(default)]
    relation_map: BTreeMap<String, Option<String>>,
    #[serde(default)]
    heads: Option<Vec<String>>,
}

impl SourceVocab {
    fn category(&self, name: &str) -> Result<usize> {
        self.objects
            .iter()
            .position(|o| o == name)
            .ok_or_else(|| FgseError::Vocabulary(format!("unknown object category {name:?}")))
    }

    fn action(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| FgseError::Vocabulary(format!("unknown action {name:?}")))
    }

    fn hand(&self, class: &str) -> HandRole {
        self.hands.get(class).copied().unwrap_or_default()
    }

    fn relation(&self, name: &str) -> Result<Option<Relation>> {
        if let Some(mapped) = self.relation_map.get(name) {
            return match mapped {
                None => Ok(None),
                Some(m) => Relation::from_name(m)
                    .map(Some)
                    .ok_or_else(|| FgseError::Vocabulary(format!("relation_map target {m:?} is not a known relation"))),
            };
        }
        if let Some(r) = Relation::from_name(name) {
            return Ok(Some(r));
        }
        let alias = match name {
            "contact" => Some(Relation::Touching),
            "left of" => Some(Relation::LeftOf),
            "right of" => Some(Relation::RightOf),
            "getting close" => Some(Relation::GettingClose),
            "moving apart" => Some(Relation::MovingApart),
            "moving together" => Some(Relation::MovingTogether),
            "halting together" => Some(Relation::HaltingTogether),
            "fixed moving together" => Some(Relation::FixedMovingTogether),
            _ => None,
        };
        alias
            .map(Some)
            .ok_or_else(|| FgseError::Vocabulary(format!("unknown relation name {name:?}")))
    }
}

fn episode_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| FgseError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name() != Some(VOCAB_FILE.as_ref()))
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BimacsObject {
    id: u32,
    class: String,
    #[serde(default)]
    center: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BimacsRelation {
    src: u32,
    dst: u32,
    names: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BimacsFrame {
    t: u64,
    objects: Vec<BimacsObject>,
    relations: Vec<BimacsRelation>,
    labels: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BimacsEpisode {
    #[serde(default)]
    episode: Option<String>,
    subject: u32,
    fps: f64,
    frames: Vec<BimacsFrame>,
}

/// Pre-extracted graphs: relation names are mapped onto the built-in ordering.
/// Objects that carry a `center` lose edges to partners beyond `max_edge_distance`.
fn load_bimacs(dir: &Path, cfg: &RelationThresholds) -> Result<EpisodeDataset> {
    let src: SourceVocab = read_json(&dir.join(VOCAB_FILE))?;
    let heads = src.heads.clone().unwrap_or_else(Vocabulary::bimanual_heads);
    let mut sequences = Vec::new();
    for file in episode_files(dir)? {
        let ep: BimacsEpisode = read_json(&file)?;
        let mut graphs = Vec::new();
        let mut labels = vec![Vec::new(); heads.len()];
        for frame in &ep.frames {
            let centers: HashMap<u32, [f64; 3]> = frame
                .objects
                .iter()
                .filter_map(|o| o.center.map(|c| (o.id, c)))
                .collect();
            let nodes = frame
                .objects
                .iter()
                .map(|o| {
                    Ok(GraphNode {
                        id: o.id,
                        cat: src.category(&o.class)?,
                        hand: src.hand(&o.class),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut edges = Vec::new();
            for r in &frame.relations {
                if let (Some(a), Some(b)) = (centers.get(&r.src), centers.get(&r.dst)) {
                    if crate::scenegraph::relations::dist(*a, *b) > cfg.max_edge_distance {
                        continue;
                    }
                }
                let mut rel = RelationVector::empty();
                for name in &r.names {
                    if let Some(rr) = src.relation(name)? {
                        rel.set(rr, true);
                    }
                }
                edges.push(GraphEdge {
                    src: r.src,
                    dst: r.dst,
                    rel,
                });
            }
            if frame.labels.len() != heads.len() {
                return Err(FgseError::Parse {
                    path: file.clone(),
                    line: 0,
                    msg: format!(
                        "frame {} has {} labels, expected {}",
                        frame.t,
                        frame.labels.len(),
                        heads.len()
                    ),
                });
            }
            for (h, l) in frame.labels.iter().enumerate() {
                labels[h].push(src.action(l)?);
            }
            graphs.push(SceneGraph {
                time_index: frame.t,
                nodes,
                edges,
            });
        }
        sequences.push(GraphSequence {
            episode: ep.episode.unwrap_or_else(|| stem(&file)),
            subject: ep.subject,
            fps: ep.fps,
            graphs,
            labels,
        });
    }
    let vocab = Vocabulary::new(src.objects.clone(), src.actions.clone(), heads);
    EpisodeDataset::new(sequences, vocab)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoaxObject {
    id: u32,
    class: String,
    center: [f64; 3],
    size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoaxLabel {
    action: String,
    object: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoaxFrame {
    t: u64,
    objects: Vec<CoaxObject>,
    labels: Vec<CoaxLabel>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoaxEpisode {
    #[serde(default)]
    episode: Option<String>,
    subject: u32,
    fps: f64,
    frames: Vec<CoaxFrame>,
}

/// Bounding-box episodes: relations are computed per frame, and observed
/// `(action, object)` label pairs become one class each.
fn load_coax(dir: &Path, cfg: &RelationThresholds) -> Result<EpisodeDataset> {
    let src: SourceVocab = read_json(&dir.join(VOCAB_FILE))?;
    let heads = src.heads.clone().unwrap_or_else(|| vec!["main".to_string()]);
    let mut episodes = Vec::new();
    let mut pairs = BTreeSet::new();
    for file in episode_files(dir)? {
        let ep: CoaxEpisode = read_json(&file)?;
        for f in &ep.frames {
            if f.labels.len() != heads.len() {
                return Err(FgseError::Parse {
                    path: file.clone(),
                    line: 0,
                    msg: format!("frame {} has {} labels, expected {}", f.t, f.labels.len(), heads.len()),
                });
            }
            for l in &f.labels {
                src.action(&l.action)?;
                src.category(&l.object)?;
                pairs.insert(l.clone());
            }
        }
        episodes.push((stem(&file), ep));
    }
    let pairs: Vec<CoaxLabel> = pairs.into_iter().collect();
    let class_of: HashMap<&CoaxLabel, usize> = pairs.iter().enumerate().map(|(i, p)| (p, i)).collect();

    let mut sequences = Vec::new();
    for (name, ep) in &episodes {
        let mut graphs = Vec::new();
        let mut labels = vec![Vec::new(); heads.len()];
        let mut prev: Option<Vec<ObjectTrack>> = None;
        for f in &ep.frames {
            let tracks = f
                .objects
                .iter()
                .map(|o| {
                    Ok(ObjectTrack {
                        object_id: o.id,
                        category: src.category(&o.class)?,
                        bbox: Box3::new(o.center, o.size),
                        hand_role: src.hand(&o.class),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            graphs.push(build_scene_graph(f.t, &tracks, prev.as_deref(), cfg)?);
            for (h, l) in f.labels.iter().enumerate() {
                labels[h].push(class_of[l]);
            }
            prev = Some(tracks);
        }
        sequences.push(GraphSequence {
            episode: ep.episode.clone().unwrap_or_else(|| name.clone()),
            subject: ep.subject,
            fps: ep.fps,
            graphs,
            labels,
        });
    }
    let mut vocab = Vocabulary::new(
        src.objects.clone(),
        pairs.iter().map(|p| format!("{}:{}", p.action, p.object)).collect(),
        heads,
    );
    vocab.label_pairs = pairs.into_iter().map(|p| (p.action, p.object)).collect();
    EpisodeDataset::new(sequences, vocab)
}
