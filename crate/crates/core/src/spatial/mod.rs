//! Diagonal spatial relations as strict orders on two independent axes.
//!
//! `row_lt` holds an edge `u -> v` when `row(u) < row(v)` (u is further north),
//! `col_lt` when `col(u) < col(v)` (u is further west). A set of diagonal
//! relations is satisfiable exactly when both digraphs are acyclic.

mod oracle;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{satisfiability_oracle, OracleRefused, MAX_ORACLE_ENTITIES};

use crate::verdict::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagonal {
    #[serde(rename = "NW")]
    Northwest,
    #[serde(rename = "NE")]
    Northeast,
    #[serde(rename = "SW")]
    Southwest,
    #[serde(rename = "SE")]
    Southeast,
}

impl Diagonal {
    pub const ALL: [Diagonal; 4] =
        [Diagonal::Northwest, Diagonal::Northeast, Diagonal::Southwest, Diagonal::Southeast];

    pub fn opposite(self) -> Self {
        match self {
            Diagonal::Northwest => Diagonal::Southeast,
            Diagonal::Southeast => Diagonal::Northwest,
            Diagonal::Northeast => Diagonal::Southwest,
            Diagonal::Southwest => Diagonal::Northeast,
        }
    }

    /// `(subject north of object, subject west of object)`.
    pub fn axes(self) -> (bool, bool) {
        match self {
            Diagonal::Northwest => (true, true),
            Diagonal::Northeast => (true, false),
            Diagonal::Southwest => (false, true),
            Diagonal::Southeast => (false, false),
        }
    }

    pub fn from_axes(north: bool, west: bool) -> Self {
        match (north, west) {
            (true, true) => Diagonal::Northwest,
            (true, false) => Diagonal::Northeast,
            (false, true) => Diagonal::Southwest,
            (false, false) => Diagonal::Southeast,
        }
    }

    pub fn name(self) -> &'static str {
        Compass::from(self).name()
    }
}

impl fmt::Display for Diagonal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Eight-way direction used in conclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Compass {
    #[serde(rename = "NW")]
    Northwest,
    #[serde(rename = "NE")]
    Northeast,
    #[serde(rename = "SW")]
    Southwest,
    #[serde(rename = "SE")]
    Southeast,
    #[serde(rename = "N")]
    North,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "W")]
    West,
}

impl Compass {
    pub fn name(self) -> &'static str {
        match self {
            Compass::Northwest => "Northwest",
            Compass::Northeast => "Northeast",
            Compass::Southwest => "Southwest",
            Compass::Southeast => "Southeast",
            Compass::North => "North",
            Compass::South => "South",
            Compass::East => "East",
            Compass::West => "West",
        }
    }

    pub fn diagonal(self) -> Option<Diagonal> {
        match self {
            Compass::Northwest => Some(Diagonal::Northwest),
            Compass::Northeast => Some(Diagonal::Northeast),
            Compass::Southwest => Some(Diagonal::Southwest),
            Compass::Southeast => Some(Diagonal::Southeast),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Compass::North => Compass::South,
            Compass::South => Compass::North,
            Compass::East => Compass::West,
            Compass::West => Compass::East,
            d => Compass::from(d.diagonal().expect("diagonal").opposite()),
        }
    }

    /// The two diagonals that must both be confirmed for a cardinal.
    pub fn flanking(self) -> Option<(Diagonal, Diagonal)> {
        match self {
            Compass::North => Some((Diagonal::Northwest, Diagonal::Northeast)),
            Compass::South => Some((Diagonal::Southwest, Diagonal::Southeast)),
            Compass::West => Some((Diagonal::Northwest, Diagonal::Southwest)),
            Compass::East => Some((Diagonal::Northeast, Diagonal::Southeast)),
            _ => None,
        }
    }
}

impl From<Diagonal> for Compass {
    fn from(d: Diagonal) -> Self {
        match d {
            Diagonal::Northwest => Compass::Northwest,
            Diagonal::Northeast => Compass::Northeast,
            Diagonal::Southwest => Compass::Southwest,
            Diagonal::Southeast => Compass::Southeast,
        }
    }
}

impl fmt::Display for Compass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Compass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | ' ' | '_'))
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Ok(match norm.as_str() {
            "northwest" | "nw" => Compass::Northwest,
            "northeast" | "ne" => Compass::Northeast,
            "southwest" | "sw" => Compass::Southwest,
            "southeast" | "se" => Compass::Southeast,
            "north" | "n" => Compass::North,
            "south" | "s" => Compass::South,
            "east" | "e" => Compass::East,
            "west" | "w" => Compass::West,
            _ => return Err(()),
        })
    }
}

/// `subject` is to the `dir` of `object`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiagRelation {
    pub subject: String,
    pub dir: Diagonal,
    pub object: String,
}

impl DiagRelation {
    pub fn new(subject: impl Into<String>, dir: Diagonal, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), dir, object: object.into() }
    }

    pub fn sentence(&self) -> String {
        format!("{} is to the {} of {}", self.subject, self.dir, self.object)
    }
}

impl fmt::Display for DiagRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.sentence())
    }
}

/// Orients a relation so the lexicographically smaller name is the subject.
pub fn normalize_relation(rel: &DiagRelation) -> DiagRelation {
    if rel.object < rel.subject {
        DiagRelation::new(rel.object.clone(), rel.dir.opposite(), rel.subject.clone())
    } else {
        rel.clone()
    }
}

/// A claimed direction between two entities, possibly cardinal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatialClaim {
    pub subject: String,
    pub dir: Compass,
    pub object: String,
}

impl SpatialClaim {
    pub fn new(subject: impl Into<String>, dir: Compass, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), dir, object: object.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpatialError {
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("an entity cannot be related to itself ({0:?})")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Row,
    Col,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Edge {
    to: usize,
    relation: usize,
}

/// Two strict-order digraphs built from asserted diagonal relations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationStore {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    row_lt: Vec<Vec<Edge>>,
    col_lt: Vec<Vec<Edge>>,
    asserted: Vec<DiagRelation>,
}

impl RelationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entities<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut store = Self::new();
        for n in names {
            store.intern(n.into());
        }
        store
    }

    /// Builds a store from relations that are expected to be consistent.
    pub fn from_relations<'a>(rels: impl IntoIterator<Item = &'a DiagRelation>) -> Result<Self, Verdict> {
        let mut store = Self::new();
        for r in rels {
            let v = store.assert_relation(r);
            if !v.pass {
                return Err(v);
            }
        }
        Ok(store)
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn asserted(&self) -> &[DiagRelation] {
        &self.asserted
    }

    pub fn edge_count(&self) -> usize {
        self.row_lt.iter().map(Vec::len).sum::<usize>() + self.col_lt.iter().map(Vec::len).sum::<usize>()
    }

    fn intern(&mut self, name: String) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.row_lt.push(Vec::new());
        self.col_lt.push(Vec::new());
        i
    }

    fn id(&self, name: &str) -> Result<usize, SpatialError> {
        self.index.get(name).copied().ok_or_else(|| SpatialError::UnknownEntity(name.to_string()))
    }

    fn graph(&self, axis: Axis) -> &[Vec<Edge>] {
        match axis {
            Axis::Row => &self.row_lt,
            Axis::Col => &self.col_lt,
        }
    }

    /// Shortest edge chain `from -> ... -> to`, as relation indices.
    fn path(&self, axis: Axis, from: usize, to: usize) -> Option<Vec<usize>> {
        let g = self.graph(axis);
        if from >= g.len() || to >= g.len() {
            return None;
        }
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; g.len()];
        let mut seen = vec![false; g.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(u) = queue.pop_front() {
            if u == to {
                let mut chain = Vec::new();
                let mut cur = to;
                while let Some((p, rel)) = prev[cur] {
                    chain.push(rel);
                    cur = p;
                }
                chain.reverse();
                return Some(chain);
            }
            for e in &g[u] {
                if !seen[e.to] {
                    seen[e.to] = true;
                    prev[e.to] = Some((u, e.relation));
                    queue.push_back(e.to);
                }
            }
        }
        None
    }

    fn reaches(&self, axis: Axis, from: usize, to: usize) -> bool {
        from != to && self.path(axis, from, to).is_some()
    }

    /// Axis edges implied by `rel`, as `(row_lo, row_hi, col_lo, col_hi)` ids.
    fn axis_edges(s: usize, dir: Diagonal, o: usize) -> ((usize, usize), (usize, usize)) {
        let (north, west) = dir.axes();
        let row = if north { (s, o) } else { (o, s) };
        let col = if west { (s, o) } else { (o, s) };
        (row, col)
    }

    fn cycle_feedback(&self, rel: &DiagRelation, axis: Axis, chain: &[usize]) -> String {
        let steps: Vec<String> = chain.iter().map(|&i| self.asserted[i].sentence()).collect();
        let axis_name = match axis {
            Axis::Row => "north-south",
            Axis::Col => "east-west",
        };
        format!(
            "\"{}\" contradicts the {axis_name} ordering implied by: {}.",
            rel.sentence(),
            steps.join("; ")
        )
    }

    /// Finds a contradiction that adding `rel` would create, without mutating.
    fn contradiction(&self, rel: &DiagRelation) -> Option<String> {
        let (Some(&s), Some(&o)) = (self.index.get(&rel.subject), self.index.get(&rel.object)) else {
            // a new entity cannot close a cycle
            return None;
        };
        let (row, col) = Self::axis_edges(s, rel.dir, o);
        for (axis, (lo, hi)) in [(Axis::Row, row), (Axis::Col, col)] {
            if let Some(chain) = self.path(axis, hi, lo) {
                return Some(self.cycle_feedback(rel, axis, &chain));
            }
        }
        None
    }

    /// Adds `rel` if it keeps both axes acyclic; otherwise leaves the store unchanged.
    pub fn assert_relation(&mut self, rel: &DiagRelation) -> Verdict {
        if rel.subject == rel.object {
            return Verdict::fail(format!(
                "\"{}\" relates an entity to itself.",
                rel.sentence()
            ));
        }
        if let Some(feedback) = self.contradiction(rel) {
            return Verdict::fail(feedback);
        }
        let s = self.intern(rel.subject.clone());
        let o = self.intern(rel.object.clone());
        let relation = self.asserted.len();
        self.asserted.push(rel.clone());
        let ((r_lo, r_hi), (c_lo, c_hi)) = Self::axis_edges(s, rel.dir, o);
        self.row_lt[r_lo].push(Edge { to: r_hi, relation });
        self.col_lt[c_lo].push(Edge { to: c_hi, relation });
        Verdict::pass()
    }

    /// `Some(true)` if x is strictly north of y, `Some(false)` if strictly south.
    fn row_order(&self, x: usize, y: usize) -> Option<bool> {
        if self.reaches(Axis::Row, x, y) {
            Some(true)
        } else if self.reaches(Axis::Row, y, x) {
            Some(false)
        } else {
            None
        }
    }

    /// `Some(true)` if x is strictly west of y, `Some(false)` if strictly east.
    fn col_order(&self, x: usize, y: usize) -> Option<bool> {
        if self.reaches(Axis::Col, x, y) {
            Some(true)
        } else if self.reaches(Axis::Col, y, x) {
            Some(false)
        } else {
            None
        }
    }

    fn confirmed(&self, x: &str, dir: Diagonal, y: &str) -> bool {
        let want = normalize_relation(&DiagRelation::new(x, dir, y));
        self.asserted.iter().any(|r| normalize_relation(r) == want)
    }

    /// Direction of `x` relative to `y` entailed by the store, if any.
    pub fn entailed_direction(&self, x: &str, y: &str) -> Result<Option<Compass>, SpatialError> {
        if x == y {
            return Err(SpatialError::Degenerate(x.to_string()));
        }
        let (xi, yi) = (self.id(x)?, self.id(y)?);
        Ok(match (self.row_order(xi, yi), self.col_order(xi, yi)) {
            (Some(north), Some(west)) => Some(Diagonal::from_axes(north, west).into()),
            (Some(north), None) => {
                let c = if north { Compass::North } else { Compass::South };
                self.cardinal_if_confirmed(x, c, y)
            }
            (None, Some(west)) => {
                let c = if west { Compass::West } else { Compass::East };
                self.cardinal_if_confirmed(x, c, y)
            }
            (None, None) => None,
        })
    }

    fn cardinal_if_confirmed(&self, x: &str, c: Compass, y: &str) -> Option<Compass> {
        let (a, b) = c.flanking()?;
        (self.confirmed(x, a, y) && self.confirmed(x, b, y)).then_some(c)
    }

    /// Whether `x` lies in diagonal `dir` of `y`: entailed in, entailed out, or undecided.
    pub fn membership(&self, x: &str, dir: Diagonal, y: &str) -> Result<Option<bool>, SpatialError> {
        if x == y {
            return Err(SpatialError::Degenerate(x.to_string()));
        }
        let (xi, yi) = (self.id(x)?, self.id(y)?);
        let (north, west) = dir.axes();
        let row = self.row_order(xi, yi);
        let col = self.col_order(xi, yi);
        if row == Some(!north) || col == Some(!west) {
            return Ok(Some(false));
        }
        if row == Some(north) && col == Some(west) {
            return Ok(Some(true));
        }
        Ok(None)
    }

    /// Entities entailed to lie in `dir` of `anchor`, in insertion order.
    pub fn entities_in(&self, dir: Diagonal, anchor: &str) -> Result<Vec<String>, SpatialError> {
        self.id(anchor)?;
        let mut out = Vec::new();
        for name in self.names.iter().filter(|n| n.as_str() != anchor) {
            if self.membership(name, dir, anchor)? == Some(true) {
                out.push(name.clone());
            }
        }
        Ok(out)
    }

    /// Checks a claimed conclusion against the store without changing it.
    pub fn verify_conclusion(&self, claim: &SpatialClaim) -> Verdict {
        for name in [&claim.subject, &claim.object] {
            if !self.contains(name) {
                return Verdict::fail(format!(
                    "\"{name}\" is not an entity on this map; use the complete name exactly as given."
                ));
            }
        }
        if claim.subject == claim.object {
            return Verdict::fail(format!("\"{}\" is compared with itself.", claim.subject));
        }
        let sentence = format!("{} is to the {} of {}", claim.subject, claim.dir, claim.object);
        let (s, o) = (self.index[&claim.subject], self.index[&claim.object]);
        match claim.dir.diagonal() {
            Some(d) => {
                if let Some(fb) = self.contradiction(&DiagRelation::new(&*claim.subject, d, &*claim.object)) {
                    return Verdict::fail(fb);
                }
            }
            None => {
                // a cardinal is strict on one axis and equal on the other
                let row_axis = matches!(claim.dir, Compass::North | Compass::South);
                let (strict_axis, equal_axis) = if row_axis { (Axis::Row, Axis::Col) } else { (Axis::Col, Axis::Row) };
                let forward = matches!(claim.dir, Compass::North | Compass::West);
                let (lo, hi) = if forward { (s, o) } else { (o, s) };
                if let Some(chain) = self.path(strict_axis, hi, lo) {
                    return Verdict::fail(format!(
                        "\"{sentence}\" contradicts: {}.",
                        self.chain_text(&chain)
                    ));
                }
                for (a, b) in [(s, o), (o, s)] {
                    if let Some(chain) = self.path(equal_axis, a, b) {
                        return Verdict::fail(format!(
                            "\"{sentence}\" cannot hold: {} places them on different {}.",
                            self.chain_text(&chain),
                            if row_axis { "columns" } else { "rows" }
                        ));
                    }
                }
            }
        }
        match self.entailed_direction(&claim.subject, &claim.object) {
            Ok(Some(entailed)) if entailed != claim.dir => Verdict::fail(format!(
                "\"{sentence}\" is wrong: the map entails that {} is to the {entailed} of {}.",
                claim.subject, claim.object
            )),
            _ => Verdict::pass(),
        }
    }

    fn chain_text(&self, chain: &[usize]) -> String {
        chain.iter().map(|&i| self.asserted[i].sentence()).collect::<Vec<_>>().join("; ")
    }
}
