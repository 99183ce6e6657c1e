//! Spatiotemporal relations between pairs of 3D boxes.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FgseError, Result};

pub const RELATION_COUNT: usize = 14;

/// Fixed relation ordering. Bit `i` of a [`RelationVector`] is `Relation::ALL[i]`.
/// The ordering is part of the checkpoint and dataset formats; never reorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Touching,
    Above,
    Below,
    Inside,
    Surround,
    Around,
    LeftOf,
    RightOf,
    GettingClose,
    MovingApart,
    MovingTogether,
    HaltingTogether,
    FixedMovingTogether,
    Stable,
}

impl Relation {
    pub const ALL: [Relation; RELATION_COUNT] = [
        Relation::Touching,
        Relation::Above,
        Relation::Below,
        Relation::Inside,
        Relation::Surround,
        Relation::Around,
        Relation::LeftOf,
        Relation::RightOf,
        Relation::GettingClose,
        Relation::MovingApart,
        Relation::MovingTogether,
        Relation::HaltingTogether,
        Relation::FixedMovingTogether,
        Relation::Stable,
    ];

    /// Groups in which at most one relation may hold for a directed pair.
    pub const EXCLUSIVE_GROUPS: [&'static [Relation]; 4] = [
        &[Relation::Above, Relation::Below],
        &[Relation::Inside, Relation::Surround],
        &[Relation::LeftOf, Relation::RightOf],
        &[Relation::GettingClose, Relation::MovingApart, Relation::Stable],
    ];

    pub fn bit(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Touching => "touching",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Inside => "inside",
            Relation::Surround => "surround",
            Relation::Around => "around",
            Relation::LeftOf => "left-of",
            Relation::RightOf => "right-of",
            Relation::GettingClose => "getting-close",
            Relation::MovingApart => "moving-apart",
            Relation::MovingTogether => "moving-together",
            Relation::HaltingTogether => "halting-together",
            Relation::FixedMovingTogether => "fixed-moving-together",
            Relation::Stable => "stable",
        }
    }

    pub fn from_name(name: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn is_dynamic(self) -> bool {
        self.bit() >= Relation::GettingClose.bit()
    }

    pub fn names() -> Vec<String> {
        Relation::ALL.iter().map(|r| r.name().to_string()).collect()
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 14-bit binary edge feature.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct RelationVector(u16);

impl RelationVector {
    pub fn empty() -> Self {
        RelationVector(0)
    }

    pub fn from_relations(rels: &[Relation]) -> Self {
        let mut v = RelationVector::empty();
        for &r in rels {
            v.set(r, true);
        }
        v
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != RELATION_COUNT {
            return Err(FgseError::Argument(format!(
                "relation vector needs {RELATION_COUNT} entries, got {}",
                bits.len()
            )));
        }
        let mut v = RelationVector::empty();
        for (i, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => v.0 |= 1 << i,
                other => {
                    return Err(FgseError::Argument(format!(
                        "relation bit {i} must be 0 or 1, got {other}"
                    )))
                }
            }
        }
        Ok(v)
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn get(self, r: Relation) -> bool {
        self.0 & (1 << r.bit()) != 0
    }

    pub fn set(&mut self, r: Relation, on: bool) {
        if on {
            self.0 |= 1 << r.bit();
        } else {
            self.0 &= !(1 << r.bit());
        }
    }

    pub fn union(self, other: RelationVector) -> RelationVector {
        RelationVector(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn bits(self) -> [u8; RELATION_COUNT] {
        let mut out = [0u8; RELATION_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            *o = ((self.0 >> i) & 1) as u8;
        }
        out
    }

    pub fn as_f32(self) -> [f32; RELATION_COUNT] {
        self.bits().map(f32::from)
    }

    pub fn relations(self) -> impl Iterator<Item = Relation> {
        Relation::ALL.into_iter().filter(move |r| self.get(*r))
    }

    pub fn groups_exclusive(self) -> bool {
        Relation::EXCLUSIVE_GROUPS
            .iter()
            .all(|g| g.iter().filter(|r| self.get(**r)).count() <= 1)
    }

    /// Exchanges the left-of and right-of bits.
    pub fn mirrored(self) -> RelationVector {
        let mut out = self;
        out.set(Relation::LeftOf, self.get(Relation::RightOf));
        out.set(Relation::RightOf, self.get(Relation::LeftOf));
        out
    }
}

impl fmt::Debug for RelationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.relations().map(Relation::name)).finish()
    }
}

impl Serialize for RelationVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.bits().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RelationVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(d)?;
        RelationVector::from_bits(&bits).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box: center and full side lengths in meters. `z` is up, `x` is lateral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub center: [f64; 3],
    pub size: [f64; 3],
}

impl Box3 {
    pub fn new(center: [f64; 3], size: [f64; 3]) -> Self {
        Box3 { center, size }
    }

    pub fn is_valid(&self) -> bool {
        self.size.iter().all(|s| *s > 0.0 && s.is_finite()) && self.center.iter().all(|c| c.is_finite())
    }

    pub fn min(&self, axis: usize) -> f64 {
        self.center[axis] - self.size[axis] / 2.0
    }

    pub fn max(&self, axis: usize) -> f64 {
        self.center[axis] + self.size[axis] / 2.0
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    pub fn center_distance(&self, other: &Box3) -> f64 {
        dist(self.center, other.center)
    }

    /// Separation along each axis; zero where the projections overlap.
    pub fn axis_gaps(&self, other: &Box3) -> [f64; 3] {
        std::array::from_fn(|k| {
            let reach = (self.size[k] + other.size[k]) / 2.0;
            ((self.center[k] - other.center[k]).abs() - reach).max(0.0)
        })
    }

    /// Euclidean distance between the closest points of the two boxes.
    pub fn gap(&self, other: &Box3) -> f64 {
        self.axis_gaps(other).iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn intersection_volume(&self, other: &Box3) -> f64 {
        (0..3)
            .map(|k| (self.max(k).min(other.max(k)) - self.min(k).max(other.min(k))).max(0.0))
            .product()
    }

    pub fn translated(&self, by: [f64; 3]) -> Box3 {
        Box3 {
            center: std::array::from_fn(|k| self.center[k] + by[k]),
            size: self.size,
        }
    }
}

pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Geometric thresholds for relation extraction and edge filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelationThresholds {
    /// Boxes closer than this count as touching (meters).
    pub contact_tolerance: f64,
    /// Center displacement per frame below which an object is at rest (meters).
    pub motion_epsilon: f64,
    /// Fraction of the smaller box that must lie in the larger one for `inside`.
    pub containment_ratio: f64,
    /// Box gap under which non-contact pairs are `around` each other (meters).
    pub proximity_distance: f64,
    /// Object pairs with centers further apart get no edge (meters).
    pub max_edge_distance: f64,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        RelationThresholds {
            contact_tolerance: 0.02,
            motion_epsilon: 0.01,
            containment_ratio: 0.9,
            proximity_distance: 0.10,
            max_edge_distance: 1.5,
        }
    }
}

fn is_inside(a: &Box3, b: &Box3, cfg: &RelationThresholds) -> bool {
    a.volume() < b.volume() && a.intersection_volume(b) / a.volume() >= cfg.containment_ratio
}

fn is_above(a: &Box3, b: &Box3, cfg: &RelationThresholds) -> bool {
    let g = a.axis_gaps(b);
    g[0] == 0.0 && g[1] == 0.0 && a.center[2] > b.center[2] && a.min(2) >= b.max(2) - cfg.contact_tolerance
}

fn is_left_of(a: &Box3, b: &Box3, cfg: &RelationThresholds) -> bool {
    a.center[0] < b.center[0] && a.max(0) <= b.min(0) + cfg.contact_tolerance
}

/// Static bits for the directed pair `a -> b`.
pub fn compute_static_relations(a: &Box3, b: &Box3, cfg: &RelationThresholds) -> RelationVector {
    let mut rel = RelationVector::empty();
    let inside = is_inside(a, b, cfg);
    let surround = is_inside(b, a, cfg);
    let nested = inside || surround;
    let gap = a.gap(b);
    let contact = a.axis_gaps(b).iter().all(|g| *g <= cfg.contact_tolerance);
    let touching = contact && !nested;
    let above = !nested && is_above(a, b, cfg);
    let below = !nested && is_above(b, a, cfg);
    let near = gap <= cfg.proximity_distance;

    rel.set(Relation::Inside, inside);
    rel.set(Relation::Surround, surround);
    rel.set(Relation::Touching, touching);
    rel.set(Relation::Above, above);
    rel.set(Relation::Below, below);
    rel.set(Relation::Around, near && !touching && !above && !below && !nested);
    rel.set(Relation::LeftOf, near && !nested && is_left_of(a, b, cfg));
    rel.set(Relation::RightOf, near && !nested && is_left_of(b, a, cfg));
    rel
}

/// Dynamic bits for `a -> b` from the boxes in two consecutive frames.
pub fn compute_dynamic_relations(
    a_prev: &Box3,
    a_cur: &Box3,
    b_prev: &Box3,
    b_cur: &Box3,
    cfg: &RelationThresholds,
) -> RelationVector {
    let eps = cfg.motion_epsilon;
    let delta = a_cur.center_distance(b_cur) - a_prev.center_distance(b_prev);
    let a_moves = dist(a_prev.center, a_cur.center) >= eps;
    let b_moves = dist(b_prev.center, b_cur.center) >= eps;
    let touching = compute_static_relations(a_cur, b_cur, cfg).get(Relation::Touching);

    let mut rel = RelationVector::empty();
    rel.set(Relation::GettingClose, delta < -eps);
    rel.set(Relation::MovingApart, delta > eps);
    rel.set(Relation::Stable, delta.abs() <= eps && !touching);
    rel.set(
        Relation::MovingTogether,
        touching && a_moves && b_moves && delta.abs() <= eps,
    );
    rel.set(Relation::HaltingTogether, touching && !a_moves && !b_moves);
    rel.set(Relation::FixedMovingTogether, touching && (a_moves != b_moves));
    rel
}
