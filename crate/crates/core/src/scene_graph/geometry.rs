//! Deterministic spatial predicates over axis-aligned boxes.
//!
//! Priority per ordered pair is In > On > directional. Directional relations
//! are only emitted between nearby objects that share no In/On edge, and
//! never for held objects or the hand itself (both move continuously while
//! a human acts, and would otherwise flood the keyframe detector).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    valid_id, valid_label, DetectedObject, FrameObservation, Relation, RelationEdge, SceneGraph,
    SceneGraphError, SceneNode, HAND_CLASS,
};

/// Thresholds for the spatial predicates. Axis convention: +x right,
/// +y behind (away from the viewer), +z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    pub contact_epsilon_m: f64,
    pub containment_fraction: f64,
    pub held_distance_m: f64,
    /// Directional relations need centroid offsets within this multiple of
    /// the pair's combined half-extents on every axis.
    pub proximity_factor: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            contact_epsilon_m: 0.02,
            containment_fraction: 0.9,
            held_distance_m: 0.10,
            proximity_factor: 3.0,
        }
    }
}

impl GeometryParams {
    pub fn is_valid(&self) -> bool {
        self.contact_epsilon_m > 0.0
            && self.containment_fraction > 0.0
            && self.containment_fraction <= 1.0
            && self.held_distance_m > 0.0
            && self.proximity_factor > 0.0
    }
}

fn containment(subject: &DetectedObject, container: &DetectedObject) -> f64 {
    let vol = subject.aabb.volume();
    if vol <= 0.0 {
        // Degenerate boxes count as fully inside when enclosed.
        return if container.aabb.contains_box(&subject.aabb) { 1.0 } else { 0.0 };
    }
    subject.aabb.intersection_volume(&container.aabb) / vol
}

fn is_on(subject: &DetectedObject, support: &DetectedObject, eps: f64) -> bool {
    subject.aabb.footprint_overlaps(&support.aabb)
        && (subject.aabb.min[2] - support.aabb.max[2]).abs() <= eps
}

fn directional(subject: &DetectedObject, reference: &DetectedObject, factor: f64) -> Option<Relation> {
    let cs = subject.aabb.centroid();
    let cr = reference.aabb.centroid();
    let hs = subject.aabb.half_extents();
    let hr = reference.aabb.half_extents();
    let mut offset = [0.0; 3];
    for k in 0..3 {
        offset[k] = cs[k] - cr[k];
        if offset[k].abs() > factor * (hs[k] + hr[k]) {
            return None;
        }
    }
    // Dominant axis; ties resolve x, then y, then z.
    let mut axis = 0;
    for k in 1..3 {
        if offset[k].abs() > offset[axis].abs() {
            axis = k;
        }
    }
    if offset[axis] == 0.0 {
        return None;
    }
    let positive = offset[axis] > 0.0;
    Some(match (axis, positive) {
        (0, true) => Relation::RightOf,
        (0, false) => Relation::LeftOf,
        (1, true) => Relation::Behind,
        (1, false) => Relation::InFrontOf,
        (2, true) => Relation::Above,
        _ => Relation::Below,
    })
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Build the canonical scene graph of one frame.
pub fn compute_relations(
    frame: &FrameObservation,
    params: &GeometryParams,
) -> Result<SceneGraph, SceneGraphError> {
    let mut seen = BTreeSet::new();
    let all: Vec<&DetectedObject> = frame.objects.iter().chain(frame.hand.iter()).collect();
    for obj in &all {
        if !obj.aabb.is_valid() {
            return Err(SceneGraphError::MalformedBox(obj.instance_id.clone()));
        }
        if !valid_id(&obj.instance_id) {
            return Err(SceneGraphError::InvalidLabel(obj.instance_id.clone()));
        }
        if !valid_label(&obj.class_label) {
            return Err(SceneGraphError::InvalidLabel(obj.class_label.clone()));
        }
        if !seen.insert(obj.instance_id.as_str()) {
            return Err(SceneGraphError::DuplicateInstanceId(obj.instance_id.clone()));
        }
    }

    let objects: Vec<&DetectedObject> = frame
        .objects
        .iter()
        .filter(|o| o.class_label != HAND_CLASS)
        .collect();
    let hands: Vec<&DetectedObject> = all.iter().copied().filter(|o| o.class_label == HAND_CLASS).collect();

    let mut edges = Vec::new();
    let mut held = BTreeSet::new();
    for hand in &hands {
        let hc = hand.aabb.centroid();
        for obj in &objects {
            if distance(obj.aabb.centroid(), hc) <= params.held_distance_m {
                held.insert(obj.instance_id.as_str());
                edges.push(RelationEdge::new(&obj.instance_id, Relation::Held, &hand.instance_id));
            }
        }
    }

    let mut supported: BTreeSet<(&str, &str)> = BTreeSet::new();
    for a in &objects {
        for b in &objects {
            if a.instance_id == b.instance_id {
                continue;
            }
            if containment(a, b) >= params.containment_fraction {
                edges.push(RelationEdge::new(&a.instance_id, Relation::In, &b.instance_id));
                supported.insert((&a.instance_id, &b.instance_id));
            } else if is_on(a, b, params.contact_epsilon_m) {
                edges.push(RelationEdge::new(&a.instance_id, Relation::On, &b.instance_id));
                supported.insert((&a.instance_id, &b.instance_id));
            }
        }
    }

    for a in &objects {
        if held.contains(a.instance_id.as_str()) {
            continue;
        }
        for b in &objects {
            if a.instance_id == b.instance_id || held.contains(b.instance_id.as_str()) {
                continue;
            }
            let (ia, ib) = (a.instance_id.as_str(), b.instance_id.as_str());
            if supported.contains(&(ia, ib)) || supported.contains(&(ib, ia)) {
                continue;
            }
            if let Some(rel) = directional(a, b, params.proximity_factor) {
                edges.push(RelationEdge::new(ia, rel, ib));
            }
        }
    }

    let nodes = all
        .iter()
        .map(|o| SceneNode {
            id: o.instance_id.clone(),
            class_label: o.class_label.clone(),
            state: o.state.clone(),
        })
        .collect();
    SceneGraph::new(nodes, edges)
}
