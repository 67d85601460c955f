//! Scene graphs: the observation-level unit of knowledge.
//!
//! A [`SceneGraph`] is a set of [`SceneNode`]s (instance id, class label,
//! optional state) and typed [`RelationEdge`]s between them. Graphs are kept
//! in canonical form at all times: nodes sorted by id, edges sorted by
//! `(subject, relation, object)` with no duplicates. Equality of canonical
//! forms is what the keyframe rule and the text serializer rely on.

mod geometry;
mod observation;
mod text;

pub use geometry::{compute_relations, GeometryParams};
pub use observation::{Aabb, DetectedObject, FrameObservation, Recording};
pub use text::{parse_text, serialize_compact, serialize_objects_only, serialize_text};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved class label for the human hand (or robot gripper) node.
pub const HAND_CLASS: &str = "hand";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SceneGraphError {
    #[error("malformed box for `{0}`: min exceeds max")]
    MalformedBox(String),
    #[error("duplicate instance id `{0}`")]
    DuplicateInstanceId(String),
    #[error("unknown node id `{0}`")]
    UnknownNodeId(String),
    #[error("edge `{0}` relates a node to itself")]
    SelfEdge(String),
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
    #[error("frame indices must be strictly increasing (saw {prev} then {next})")]
    FrameOrder { prev: u64, next: u64 },
    #[error("cannot parse scene graph text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    In,
    On,
    LeftOf,
    RightOf,
    InFrontOf,
    Behind,
    Above,
    Below,
    Held,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::In,
        Relation::On,
        Relation::LeftOf,
        Relation::RightOf,
        Relation::InFrontOf,
        Relation::Behind,
        Relation::Above,
        Relation::Below,
        Relation::Held,
    ];

    /// Phrase used in the text form, as in "pen is in drawer".
    pub fn phrase(self) -> &'static str {
        match self {
            Relation::In => "in",
            Relation::On => "on",
            Relation::LeftOf => "to the left of",
            Relation::RightOf => "to the right of",
            Relation::InFrontOf => "in front of",
            Relation::Behind => "behind",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Held => "held by",
        }
    }

    pub fn from_phrase(phrase: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.phrase() == phrase)
    }

    pub fn is_directional(self) -> bool {
        !matches!(self, Relation::In | Relation::On | Relation::Held)
    }

    pub fn inverse(self) -> Option<Relation> {
        Some(match self {
            Relation::LeftOf => Relation::RightOf,
            Relation::RightOf => Relation::LeftOf,
            Relation::InFrontOf => Relation::Behind,
            Relation::Behind => Relation::InFrontOf,
            Relation::Above => Relation::Below,
            Relation::Below => Relation::Above,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

impl SceneNode {
    pub fn new(id: impl Into<String>, class_label: impl Into<String>) -> Self {
        SceneNode {
            id: id.into(),
            class_label: class_label.into(),
            state: None,
        }
    }

    pub fn with_state(mut self, state: impl Into<String>) -> Self {
        self.state = Some(state.into());
        self
    }

    pub fn is_hand(&self) -> bool {
        self.class_label == HAND_CLASS
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationEdge {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

impl RelationEdge {
    pub fn new(subject: impl Into<String>, relation: Relation, object: impl Into<String>) -> Self {
        RelationEdge {
            subject: subject.into(),
            relation,
            object: object.into(),
        }
    }

    pub fn touches(&self, id: &str) -> bool {
        self.subject == id || self.object == id
    }
}

impl fmt::Display for RelationEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} is {} {}", self.subject, self.relation.phrase(), self.object)
    }
}

/// Canonical scene graph. Construct with [`SceneGraph::new`] or
/// [`SceneGraphBuilder`]; both enforce the invariants.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct SceneGraph {
    nodes: Vec<SceneNode>,
    edges: Vec<RelationEdge>,
}

#[derive(Deserialize)]
struct RawGraph {
    #[serde(default)]
    nodes: Vec<SceneNode>,
    #[serde(default)]
    edges: Vec<RelationEdge>,
}

impl TryFrom<RawGraph> for SceneGraph {
    type Error = SceneGraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        SceneGraph::new(raw.nodes, raw.edges)
    }
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | '(' | ')' | '[' | ']' | '|'))
}

pub(crate) fn valid_label(label: &str) -> bool {
    !label.trim().is_empty()
        && label.trim() == label
        && !label.contains("  ")
        && !label
            .chars()
            .any(|c| matches!(c, ',' | '(' | ')' | '[' | ']' | '|' | '\n' | '\r' | '\t'))
}

impl SceneGraph {
    /// Build a canonical graph. Duplicate edges collapse; duplicate node ids,
    /// self edges and edges naming unknown nodes are rejected.
    pub fn new(nodes: Vec<SceneNode>, edges: Vec<RelationEdge>) -> Result<Self, SceneGraphError> {
        let mut by_id = BTreeMap::new();
        for node in nodes {
            if !valid_id(&node.id) {
                return Err(SceneGraphError::InvalidLabel(node.id));
            }
            if !valid_label(&node.class_label) {
                return Err(SceneGraphError::InvalidLabel(node.class_label));
            }
            if let Some(state) = &node.state {
                if !valid_label(state) {
                    return Err(SceneGraphError::InvalidLabel(state.clone()));
                }
            }
            if by_id.contains_key(&node.id) {
                return Err(SceneGraphError::DuplicateInstanceId(node.id));
            }
            by_id.insert(node.id.clone(), node);
        }
        let mut edge_set = BTreeSet::new();
        for edge in edges {
            if edge.subject == edge.object {
                return Err(SceneGraphError::SelfEdge(edge.to_string()));
            }
            for id in [&edge.subject, &edge.object] {
                if !by_id.contains_key(id) {
                    return Err(SceneGraphError::UnknownNodeId(id.clone()));
                }
            }
            edge_set.insert(edge);
        }
        Ok(SceneGraph {
            nodes: by_id.into_values().collect(),
            edges: edge_set.into_iter().collect(),
        })
    }

    pub fn empty() -> Self {
        SceneGraph::default()
    }

    pub fn nodes(&self) -> &[SceneNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&SceneNode> {
        self.nodes
            .binary_search_by(|n| n.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn has_edge(&self, subject: &str, relation: Relation, object: &str) -> bool {
        self.edges
            .binary_search_by(|e| {
                (e.subject.as_str(), e.relation, e.object.as_str()).cmp(&(subject, relation, object))
            })
            .is_ok()
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn class_of(&self, id: &str) -> Option<&str> {
        self.node(id).map(|n| n.class_label.as_str())
    }

    pub fn state_of(&self, id: &str) -> Option<&str> {
        self.node(id).and_then(|n| n.state.as_deref())
    }

    pub fn edges_from<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = &'a RelationEdge> + 'a {
        self.edges.iter().filter(move |e| e.subject == subject)
    }

    pub fn hand_id(&self) -> Option<&str> {
        self.nodes.iter().find(|n| n.is_hand()).map(|n| n.id.as_str())
    }

    /// Ids of nodes sharing an edge with any of `ids`, in either direction.
    pub fn neighbors(&self, ids: &BTreeSet<String>) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for e in &self.edges {
            if ids.contains(&e.subject) {
                out.insert(e.object.clone());
            }
            if ids.contains(&e.object) {
                out.insert(e.subject.clone());
            }
        }
        out
    }

    /// Keep the relevant nodes plus their one-hop neighbors, and every edge
    /// among the kept nodes.
    pub fn prune(&self, relevant_ids: &BTreeSet<String>) -> Result<SceneGraph, SceneGraphError> {
        if let Some(missing) = relevant_ids.iter().find(|id| !self.contains_node(id)) {
            return Err(SceneGraphError::UnknownNodeId(missing.clone()));
        }
        let mut keep = relevant_ids.clone();
        keep.extend(self.neighbors(relevant_ids));
        Ok(self.restrict(&keep))
    }

    /// Induced subgraph on `keep`; unknown ids are ignored.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> SceneGraph {
        SceneGraph {
            nodes: self
                .nodes
                .iter()
                .filter(|n| keep.contains(&n.id))
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&e.subject) && keep.contains(&e.object))
                .cloned()
                .collect(),
        }
    }

    /// Node ids whose node or incident edges differ between `self` and `other`.
    pub fn changed_ids(&self, other: &SceneGraph) -> BTreeSet<String> {
        let a: BTreeSet<&SceneNode> = self.nodes.iter().collect();
        let b: BTreeSet<&SceneNode> = other.nodes.iter().collect();
        let mut out: BTreeSet<String> = a.symmetric_difference(&b).map(|n| n.id.clone()).collect();
        let ea: BTreeSet<&RelationEdge> = self.edges.iter().collect();
        let eb: BTreeSet<&RelationEdge> = other.edges.iter().collect();
        for e in ea.symmetric_difference(&eb) {
            out.insert(e.subject.clone());
            out.insert(e.object.clone());
        }
        out
    }

    /// Merge two graphs (node attributes from `other` win on conflict).
    pub fn union(&self, other: &SceneGraph) -> SceneGraph {
        let mut nodes: BTreeMap<String, SceneNode> =
            self.nodes.iter().map(|n| (n.id.clone(), n.clone())).collect();
        for n in &other.nodes {
            nodes.insert(n.id.clone(), n.clone());
        }
        let edges: BTreeSet<RelationEdge> =
            self.edges.iter().chain(other.edges.iter()).cloned().collect();
        SceneGraph {
            nodes: nodes.into_values().collect(),
            edges: edges.into_iter().collect(),
        }
    }
}

/// True iff both graphs have identical canonical forms.
pub fn graphs_equal(a: &SceneGraph, b: &SceneGraph) -> bool {
    a == b
}

/// Incremental construction of a canonical graph.
#[derive(Debug, Default, Clone)]
pub struct SceneGraphBuilder {
    nodes: Vec<SceneNode>,
    edges: Vec<RelationEdge>,
}

impl SceneGraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(mut self, id: &str, class_label: &str) -> Self {
        self.nodes.push(SceneNode::new(id, class_label));
        self
    }

    pub fn node_with_state(mut self, id: &str, class_label: &str, state: &str) -> Self {
        self.nodes.push(SceneNode::new(id, class_label).with_state(state));
        self
    }

    pub fn edge(mut self, subject: &str, relation: Relation, object: &str) -> Self {
        self.edges.push(RelationEdge::new(subject, relation, object));
        self
    }

    pub fn push_node(&mut self, node: SceneNode) {
        self.nodes.push(node);
    }

    pub fn push_edge(&mut self, edge: RelationEdge) {
        self.edges.push(edge);
    }

    pub fn build(self) -> Result<SceneGraph, SceneGraphError> {
        SceneGraph::new(self.nodes, self.edges)
    }
}
