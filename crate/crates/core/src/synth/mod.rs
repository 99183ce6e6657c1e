//! Scripted bimanual tabletop episodes with box trajectories and per-hand labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::scenegraph::{
    build_graph_stream, Box3, EpisodeDataset, GraphSequence, HandRole, ObjectTrack, RelationThresholds, Vocabulary,
};

pub const ACTIONS: [&str; 8] = ["idle", "approach", "lift", "hold", "place", "retreat", "pour", "drink"];
pub const OBJECTS: [&str; 5] = ["hand", "table", "cup", "bottle", "bowl"];
pub const MANIFEST_FILE: &str = "scenario.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Idle,
    Approach,
    Lift,
    Hold,
    Place,
    Retreat,
    Pour,
    Drink,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::Idle,
        Action::Approach,
        Action::Lift,
        Action::Hold,
        Action::Place,
        Action::Retreat,
        Action::Pour,
        Action::Drink,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

const HAND: usize = 0;
const TABLE: usize = 1;
const CUP: usize = 2;
const BOTTLE: usize = 3;
const BOWL: usize = 4;

const HAND_SIZE: [f64; 3] = [0.08, 0.08, 0.08];
const GRASP_GAP: f64 = 0.005;
const LIFT_OFFSET: [f64; 3] = [0.0, -0.05, 0.22];
const TABLE_TOP: f64 = 0.0;
/// Carrying speed into the pour and drink poses (m/frame).
const TRANSFER_SPEED: f64 = 0.015;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptObject {
    pub id: u32,
    pub category: usize,
    pub bbox: Box3,
    #[serde(default)]
    pub hand: HandRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub action: Action,
    /// Object the hand acts on.
    #[serde(default)]
    pub target: Option<u32>,
    /// Second object, e.g. the vessel poured into.
    #[serde(default)]
    pub destination: Option<u32>,
    pub duration: usize,
}

/// A complete scripted episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub episode: String,
    pub subject: u32,
    pub objects: Vec<ScriptObject>,
    /// Segments for the left and right hand, in order.
    pub hands: [Vec<Segment>; 2],
    /// Position jitter added to every center (meters).
    pub noise: f64,
    pub seed: u64,
    pub fps: f64,
}

impl ScenarioScript {
    pub fn len(&self) -> usize {
        self.hands[0].iter().map(|s| s.duration).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn hand_id(&self, side: usize) -> Result<u32> {
        let role = [HandRole::Left, HandRole::Right][side];
        self.objects
            .iter()
            .find(|o| o.hand == role)
            .map(|o| o.id)
            .ok_or_else(|| FgseError::Structure(format!("script has no {role:?} hand")))
    }

    pub fn validate(&self) -> Result<()> {
        let (l, r) = (
            self.hands[0].iter().map(|s| s.duration).sum::<usize>(),
            self.hands[1].iter().map(|s| s.duration).sum::<usize>(),
        );
        if l != r || l == 0 {
            return Err(FgseError::Structure(format!(
                "hand scripts must tile the same non-empty episode, got {l} and {r} frames"
            )));
        }
        for seg in self.hands.iter().flatten() {
            if seg.duration < 3 {
                return Err(FgseError::Structure(format!(
                    "{:?} segment shorter than 3 frames",
                    seg.action
                )));
            }
            for id in seg.target.iter().chain(&seg.destination) {
                if !self.objects.iter().any(|o| o.id == *id && o.hand == HandRole::None) {
                    return Err(FgseError::Structure(format!("segment targets unknown object {id}")));
                }
            }
            if seg.action != Action::Idle && seg.action != Action::Retreat && seg.target.is_none() {
                return Err(FgseError::Structure(format!("{:?} segment needs a target", seg.action)));
            }
        }
        self.hand_id(0)?;
        self.hand_id(1)?;
        // both hands may not engage the same object at the same time
        let spans = |side: usize| -> Vec<(usize, usize, u32)> {
            let mut t = 0;
            let mut out = Vec::new();
            for s in &self.hands[side] {
                if let Some(id) = s
                    .target
                    .filter(|_| s.action != Action::Idle && s.action != Action::Retreat)
                {
                    out.push((t, t + s.duration, id));
                }
                t += s.duration;
            }
            out
        };
        for (a0, a1, ida) in spans(0) {
            for &(b0, b1, idb) in &spans(1) {
                if ida == idb && a0 < b1 && b0 < a1 {
                    return Err(FgseError::Structure(format!(
                        "both hands engage object {ida} in frames {}..{}",
                        a0.max(b0),
                        a1.min(b1)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A generated episode: box tracks, graphs and per-hand labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub tracks: Vec<Vec<ObjectTrack>>,
    pub sequence: GraphSequence,
}

fn lerp(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * s,
        a[1] + (b[1] - a[1]) * s,
        a[2] + (b[2] - a[2]) * s,
    ]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// First point on the segment from `from` to the center of `obj` at which
/// a hand box touches `obj`.
fn contact_point(from: [f64; 3], obj: &Box3) -> [f64; 3] {
    let d = sub(from, obj.center);
    let len = norm(d);
    if len == 0.0 {
        return from;
    }
    let u = [d[0] / len, d[1] / len, d[2] / len];
    let s = (0..3)
        .filter(|&k| u[k].abs() > 1e-9)
        .map(|k| (obj.size[k] / 2.0 + HAND_SIZE[k] / 2.0 + GRASP_GAP) / u[k].abs())
        .fold(f64::INFINITY, f64::min);
    add(obj.center, [u[0] * s, u[1] * s, u[2] * s])
}

fn rest_pose(side: usize, shift: [f64; 2]) -> [f64; 3] {
    let x = if side == 0 { -0.34 } else { 0.34 };
    [x + shift[0], 0.0 + shift[1], 0.30]
}

fn lifted(center: [f64; 3]) -> [f64; 3] {
    add(center, LIFT_OFFSET)
}

/// Carried-object position while pouring into `dest`.
fn pour_pose(obj: &Box3, dest: &Box3) -> [f64; 3] {
    [dest.center[0], dest.center[1], dest.max(2) + obj.size[2] / 2.0 + 0.06]
}

fn drink_pose(center: [f64; 3]) -> [f64; 3] {
    [center[0] * 0.3, -0.18, 0.42]
}

fn frames_at(dist: f64, speed: f64) -> usize {
    ((dist / speed).ceil() as usize).max(3)
}

/// Per-segment motion plan for one hand, resolved against the current object state.
#[derive(Debug, Clone, Copy)]
struct Motion {
    hand_from: [f64; 3],
    hand_to: [f64; 3],
    /// Attached object and its offset from the hand.
    carried: Option<(usize, [f64; 3])>,
    /// Frames spent moving; the rest of the segment is still.
    frames: usize,
}

fn plan(
    seg: &Segment,
    hand: [f64; 3],
    home: [f64; 3],
    objects: &[ScriptObject],
    positions: &[[f64; 3]],
    origin: &[[f64; 3]],
) -> Motion {
    let idx = |id: u32| objects.iter().position(|o| o.id == id).expect("validated target");
    let still = Motion {
        hand_from: hand,
        hand_to: hand,
        carried: None,
        frames: seg.duration,
    };
    let target = seg.target.map(idx);
    let (t, obj) = match (seg.action, target) {
        (Action::Retreat, _) => return Motion { hand_to: home, ..still },
        (Action::Idle, _) | (_, None) => return still,
        (_, Some(t)) => (
            t,
            Box3 {
                center: positions[t],
                size: objects[t].bbox.size,
            },
        ),
    };
    let offset = sub(hand, positions[t]);
    let carry = |to_obj: [f64; 3], frames: usize| Motion {
        hand_from: hand,
        hand_to: add(to_obj, offset),
        carried: Some((t, offset)),
        frames: frames.min(seg.duration),
    };
    match seg.action {
        Action::Approach => Motion {
            hand_to: contact_point(hand, &obj),
            ..still
        },
        Action::Lift => carry(lifted(positions[t]), seg.duration),
        Action::Hold => carry(positions[t], seg.duration),
        Action::Place => carry(origin[t], seg.duration),
        Action::Pour => {
            let dest = seg.destination.map(idx).unwrap_or(t);
            let d = Box3 {
                center: positions[dest],
                size: objects[dest].bbox.size,
            };
            let to = pour_pose(&obj, &d);
            carry(to, frames_at(norm(sub(to, obj.center)), TRANSFER_SPEED))
        }
        Action::Drink => {
            let to = drink_pose(positions[t]);
            carry(to, frames_at(norm(sub(to, obj.center)), TRANSFER_SPEED))
        }
        Action::Idle | Action::Retreat => unreachable!("handled above"),
    }
}

/// Renders a script into box tracks, graphs and labels.
pub fn generate_episode(script: &ScenarioScript, thresholds: &RelationThresholds) -> Result<Episode> {
    script.validate()?;
    let n = script.len();
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let jitter =
        Normal::new(0.0, script.noise.max(0.0)).map_err(|e| FgseError::Argument(format!("noise level: {e}")))?;
    let origin: Vec<[f64; 3]> = script.objects.iter().map(|o| o.bbox.center).collect();
    let mut positions = origin.clone();
    let hand_idx = [
        script
            .objects
            .iter()
            .position(|o| o.hand == HandRole::Left)
            .expect("validated"),
        script
            .objects
            .iter()
            .position(|o| o.hand == HandRole::Right)
            .expect("validated"),
    ];
    let homes = [positions[hand_idx[0]], positions[hand_idx[1]]];

    // per-hand cursor: (segment index, frame within segment, active motion)
    let mut cursor: [(usize, usize, Option<Motion>); 2] = [(0, 0, None), (0, 0, None)];
    let mut tracks = Vec::with_capacity(n);
    let mut labels = vec![Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        for side in 0..2 {
            let (si, fi, motion) = &mut cursor[side];
            let seg = &script.hands[side][*si];
            if motion.is_none() {
                *motion = Some(plan(
                    seg,
                    positions[hand_idx[side]],
                    homes[side],
                    &script.objects,
                    &positions,
                    &origin,
                ));
            }
            let m = motion.expect("planned");
            let s = ((*fi + 1) as f64 / m.frames.max(1) as f64).min(1.0);
            let hand = lerp(m.hand_from, m.hand_to, s);
            positions[hand_idx[side]] = hand;
            if let Some((obj, offset)) = m.carried {
                positions[obj] = sub(hand, offset);
            }
            labels[side].push(seg.action.index());
            *fi += 1;
            if *fi == seg.duration {
                *si += 1;
                *fi = 0;
                *motion = None;
            }
        }
        let frame: Vec<ObjectTrack> = script
            .objects
            .iter()
            .zip(&positions)
            .map(|(o, &c)| {
                let noisy = if script.noise > 0.0 {
                    [
                        c[0] + jitter.sample(&mut rng),
                        c[1] + jitter.sample(&mut rng),
                        c[2] + jitter.sample(&mut rng),
                    ]
                } else {
                    c
                };
                ObjectTrack {
                    object_id: o.id,
                    category: o.category,
                    bbox: Box3::new(noisy, o.bbox.size),
                    hand_role: o.hand,
                }
            })
            .collect();
        tracks.push(frame);
    }
    let graphs = build_graph_stream(&tracks, 0, thresholds)?;
    Ok(Episode {
        tracks,
        sequence: GraphSequence {
            episode: script.episode.clone(),
            subject: script.subject,
            fps: script.fps,
            graphs,
            labels,
        },
    })
}

/// Difficulty and duration profile of a generated suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub n_subjects: usize,
    pub episodes_per_subject: usize,
    pub seed: u64,
    /// Center jitter σ in meters.
    pub noise: f64,
    /// Multiplier on the still phases (idle, hold, pour, drink).
    pub still_scale: f64,
    /// Multiplier on hand speeds.
    pub speed_scale: f64,
    pub fps: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n_subjects: 5,
            episodes_per_subject: 10,
            seed: 7,
            noise: 0.005,
            still_scale: 1.0,
            speed_scale: 1.0,
            fps: 30.0,
        }
    }
}

impl SuiteConfig {
    /// 2 cm jitter.
    pub fn hard(self) -> Self {
        SuiteConfig { noise: 0.02, ..self }
    }

    /// Still phases twice as long and hands moving at half speed.
    pub fn long(self) -> Self {
        SuiteConfig {
            still_scale: 2.0,
            speed_scale: 0.5,
            ..self
        }
    }
}

/// Systematic per-subject style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectStyle {
    pub subject: u32,
    /// Multiplies every hand speed.
    pub speed: f64,
    /// Offset of the whole workspace in the table plane (meters).
    pub shift: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub config: SuiteConfig,
    pub subjects: Vec<SubjectStyle>,
    pub episodes: Vec<String>,
    pub dataset_hash: String,
}

pub fn synth_vocabulary() -> Vocabulary {
    Vocabulary::new(
        OBJECTS.iter().map(|s| s.to_string()).collect(),
        ACTIONS.iter().map(|s| s.to_string()).collect(),
        Vocabulary::bimanual_heads(),
    )
}

/// Nominal hand speed while reaching (m/frame).
const REACH_SPEED: f64 = 0.02;
/// Nominal speed while carrying (m/frame).
const CARRY_SPEED: f64 = 0.016;

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    style: SubjectStyle,
    still_scale: f64,
    speed_scale: f64,
    objects: Vec<ScriptObject>,
}

impl Builder<'_> {
    fn moving(&mut self, dist: f64, speed: f64) -> usize {
        let v = speed * self.speed_scale * self.style.speed * self.rng.gen_range(0.9..1.1);
        ((dist / v).ceil() as usize).max(3)
    }

    fn still(&mut self, base: std::ops::Range<usize>) -> usize {
        let d = self.rng.gen_range(base) as f64 * self.still_scale;
        (d.round() as usize).max(3)
    }

    fn obj(&self, id: u32) -> &ScriptObject {
        self.objects.iter().find(|o| o.id == id).expect("known object")
    }

    fn seg(action: Action, target: Option<u32>, duration: usize) -> Segment {
        Segment {
            action,
            target,
            destination: None,
            duration,
        }
    }

    /// approach, lift, then `middle`, place, retreat.
    fn carry_template(&mut self, side: usize, target: u32, middle: Action, destination: Option<u32>) -> Vec<Segment> {
        let obj = self.obj(target).bbox;
        let home = rest_pose(side, self.style.shift);
        let reach = norm(sub(contact_point(home, &obj), home));
        let mut out = vec![Self::seg(
            Action::Approach,
            Some(target),
            self.moving(reach, REACH_SPEED),
        )];
        let up = lifted(obj.center);
        out.push(Self::seg(
            Action::Lift,
            Some(target),
            self.moving(norm(LIFT_OFFSET), CARRY_SPEED),
        ));
        let (middle_len, at) = match middle {
            Action::Hold => (self.still(20..40), up),
            Action::Pour => {
                let to = pour_pose(&obj, &self.obj(destination.expect("pour destination")).bbox);
                (frames_at(norm(sub(to, up)), TRANSFER_SPEED) + self.still(15..30), to)
            }
            Action::Drink => {
                let to = drink_pose(up);
                (frames_at(norm(sub(to, up)), TRANSFER_SPEED) + self.still(15..30), to)
            }
            other => unreachable!("{other:?} is not a carry middle"),
        };
        out.push(Segment {
            action: middle,
            target: Some(target),
            destination,
            duration: middle_len,
        });
        out.push(Self::seg(
            Action::Place,
            Some(target),
            self.moving(norm(sub(at, obj.center)), CARRY_SPEED),
        ));
        out.push(Self::seg(Action::Retreat, None, self.moving(reach, REACH_SPEED)));
        out
    }
}

fn layout(style: &SubjectStyle, rng: &mut ChaCha8Rng) -> Vec<ScriptObject> {
    let mut j = || rng.gen_range(-0.02..0.02);
    let (sx, sy) = (style.shift[0], style.shift[1]);
    let on_table = |cx: f64, cy: f64, size: [f64; 3]| Box3::new([cx, cy, TABLE_TOP + size[2] / 2.0], size);
    vec![
        ScriptObject {
            id: 1,
            category: HAND,
            bbox: Box3::new(rest_pose(0, style.shift), HAND_SIZE),
            hand: HandRole::Left,
        },
        ScriptObject {
            id: 2,
            category: HAND,
            bbox: Box3::new(rest_pose(1, style.shift), HAND_SIZE),
            hand: HandRole::Right,
        },
        ScriptObject {
            id: 3,
            category: TABLE,
            bbox: Box3::new([0.0, 0.40, TABLE_TOP - 0.05], [1.6, 0.8, 0.1]),
            hand: HandRole::None,
        },
        ScriptObject {
            id: 4,
            category: CUP,
            bbox: on_table(-0.22 + sx + j(), 0.40 + sy + j(), [0.08, 0.08, 0.10]),
            hand: HandRole::None,
        },
        ScriptObject {
            id: 5,
            category: BOTTLE,
            bbox: on_table(0.22 + sx + j(), 0.40 + sy + j(), [0.07, 0.07, 0.24]),
            hand: HandRole::None,
        },
        ScriptObject {
            id: 6,
            category: BOWL,
            bbox: on_table(sx + j(), 0.56 + sy + j(), [0.16, 0.16, 0.07]),
            hand: HandRole::None,
        },
    ]
}

/// Builds the script of episode `index` for a subject. Templates rotate with
/// the index so every subject performs every action within four episodes.
pub fn episode_script(cfg: &SuiteConfig, style: &SubjectStyle, index: usize) -> ScenarioScript {
    let seed = cfg
        .seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((style.subject as u64) << 20)
        .wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = layout(style, &mut rng);
    let mut b = Builder {
        rng: &mut rng,
        style: *style,
        still_scale: cfg.still_scale,
        speed_scale: cfg.speed_scale,
        objects,
    };
    let (cup, bottle, bowl) = (4, 5, 6);
    let left_main = if index.is_multiple_of(2) {
        Action::Drink
    } else {
        Action::Hold
    };
    let right_main = if (index / 2).is_multiple_of(2) {
        Action::Pour
    } else {
        Action::Hold
    };
    let mut left = vec![Builder::seg(Action::Idle, None, b.still(5..12))];
    left.extend(b.carry_template(0, cup, left_main, None));
    let mut right = vec![Builder::seg(Action::Idle, None, b.still(10..30))];
    let dest = (right_main == Action::Pour).then_some(bowl);
    right.extend(b.carry_template(1, bottle, right_main, dest));
    for hand in [&mut left, &mut right] {
        let tail = b.still(5..12);
        hand.push(Builder::seg(Action::Idle, None, tail));
    }
    // pad the shorter script with idle so both tile the episode
    let (l, r) = (
        left.iter().map(|s| s.duration).sum::<usize>(),
        right.iter().map(|s| s.duration).sum::<usize>(),
    );
    let short = if l < r { &mut left } else { &mut right };
    short.last_mut().expect("idle tail").duration += l.abs_diff(r);
    ScenarioScript {
        episode: format!("s{}-e{:02}", style.subject, index),
        subject: style.subject,
        objects: b.objects,
        hands: [left, right],
        noise: cfg.noise,
        seed: seed ^ 0xa5a5,
        fps: cfg.fps,
    }
}

pub fn subject_styles(cfg: &SuiteConfig) -> Vec<SubjectStyle> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ab1_ec75);
    (0..cfg.n_subjects as u32)
        .map(|subject| SubjectStyle {
            subject,
            speed: rng.gen_range(0.8..1.2),
            shift: [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)],
        })
        .collect()
}

/// Generates `n_subjects × episodes_per_subject` episodes.
pub fn generate_benchmark_suite(cfg: &SuiteConfig) -> Result<(EpisodeDataset, SuiteManifest)> {
    if cfg.n_subjects < 2 {
        return Err(FgseError::Config(format!(
            "a benchmark suite needs at least 2 subjects, got {}",
            cfg.n_subjects
        )));
    }
    let thresholds = RelationThresholds::default();
    let styles = subject_styles(cfg);
    let mut sequences = Vec::with_capacity(cfg.n_subjects * cfg.episodes_per_subject);
    for style in &styles {
        for e in 0..cfg.episodes_per_subject {
            let script = episode_script(cfg, style, e);
            sequences.push(generate_episode(&script, &thresholds)?.sequence);
        }
    }
    let episodes = sequences.iter().map(|s| s.episode.clone()).collect();
    let ds = EpisodeDataset::new(sequences, synth_vocabulary())?;
    let manifest = SuiteManifest {
        config: *cfg,
        subjects: styles,
        episodes,
        dataset_hash: ds.hash(),
    };
    Ok((ds, manifest))
}

/// Writes the dataset in the native format plus the scenario manifest.
pub fn write_suite(dir: &Path, ds: &EpisodeDataset, manifest: &SuiteManifest) -> Result<()> {
    ds.write_native(dir)?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(manifest)?).map_err(|e| FgseError::io(&path, e))
}

/// Frames per label, for inspecting class balance.
pub fn label_histogram(ds: &EpisodeDataset) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for s in &ds.sequences {
        for l in s.labels.iter().flatten() {
            *out.entry(ds.vocab.actions[*l].clone()).or_insert(0) += 1;
        }
    }
    out
}
