//! Deterministic symbolic tabletop world.
//!
//! The world tracks surfaces, containers (lidded or open-topped), loose
//! objects, a single-object gripper and an optional human hand-over zone.
//! Actions follow a fixed precondition table; a seeded fault stream can
//! corrupt outcomes without raising errors, so callers must notice failures
//! by observing the scene graph.

mod goal;
mod render;
mod scenario;

pub use goal::{goal_satisfied, GoalLiteral, GoalPlace, GoalSpec};
pub use render::{render_frame, synthesize_demo, FRAMES_PER_STATE};
pub use scenario::{bundled_scenario, reset, ContainerSpec, Scenario, SurfaceSpec, ObjectSpec, SCENARIO_NAMES};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionStep, Verb};
use crate::scene_graph::{Relation, RelationEdge, SceneGraph, SceneNode, HAND_CLASS};

/// Node id and class of the gripper in observations.
pub const HAND_ID: &str = "hand";
/// Node id and class of the hand-over zone in observations.
pub const HUMAN_ZONE_ID: &str = "human_zone";
pub const HUMAN_ZONE_CLASS: &str = "human zone";

/// Classes treated as surfaces / open-topped containers when a world is
/// rebuilt from a scene graph that carries no edge evidence for them.
const SURFACE_HINTS: [&str; 4] = ["table", "counter", "shelf", "desk"];
const LIDLESS_HINTS: [&str; 4] = ["plate", "bowl", "basket", "tray"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerState {
    Open,
    Closed,
}

impl ContainerState {
    pub fn as_str(self) -> &'static str {
        match self {
            ContainerState::Open => "open",
            ContainerState::Closed => "closed",
        }
    }

    pub fn parse(s: &str) -> Option<ContainerState> {
        match s {
            "open" => Some(ContainerState::Open),
            "closed" => Some(ContainerState::Closed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    OnSurface(String),
    InContainer(String),
    InGripper,
    InHumanZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreconditionKind {
    GripperOccupied,
    NotHeld,
    ContainerClosed,
    AlreadyOpen,
    AlreadyClosed,
    NotOpenable,
    NotAContainer,
    NotASurface,
    NotGraspable,
    NoHumanZone,
    Unreachable,
}

impl fmt::Display for PreconditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PreconditionKind::GripperOccupied => "gripper is occupied",
            PreconditionKind::NotHeld => "object is not held",
            PreconditionKind::ContainerClosed => "container is closed",
            PreconditionKind::AlreadyOpen => "container is already open",
            PreconditionKind::AlreadyClosed => "container is already closed",
            PreconditionKind::NotOpenable => "container has no lid",
            PreconditionKind::NotAContainer => "target is not a container",
            PreconditionKind::NotASurface => "target is not a surface",
            PreconditionKind::NotGraspable => "target cannot be grasped",
            PreconditionKind::NoHumanZone => "no human to hand over to",
            PreconditionKind::Unreachable => "object is out of reach",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("precondition violated for {step}: {kind}")]
    Precondition { step: String, kind: PreconditionKind },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultMode {
    DropAfterPick,
    NoOp,
    WrongPlacement,
}

impl FaultMode {
    fn applies_to(self, verb: Verb) -> bool {
        match self {
            FaultMode::DropAfterPick => verb == Verb::Pick,
            FaultMode::WrongPlacement => matches!(verb, Verb::PlaceIn | Verb::PlaceOn | Verb::Give),
            FaultMode::NoOp => true,
        }
    }
}

/// Seeded outcome corruption. `forced_at` lists action ordinals (0-based
/// count of `apply_action` calls on the world) at which the fault fires
/// regardless of `probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub probability: f64,
    pub mode: FaultMode,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forced_at: Vec<u64>,
}

impl FaultConfig {
    pub fn none() -> Self {
        FaultConfig { probability: 0.0, mode: FaultMode::DropAfterPick, seed: 0, forced_at: Vec::new() }
    }

    pub fn new(probability: f64, mode: FaultMode, seed: u64) -> Result<Self, SimError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(SimError::InvalidScenario(format!("fault probability {probability} outside [0, 1]")));
        }
        Ok(FaultConfig { probability, mode, seed, forced_at: Vec::new() })
    }

    pub fn forced(mode: FaultMode, ordinals: Vec<u64>) -> Self {
        FaultConfig { probability: 0.0, mode, seed: 0, forced_at: ordinals }
    }
}

impl Default for FaultConfig {
    fn default() -> Self {
        FaultConfig::none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub step: ActionStep,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultMode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub class_label: String,
    /// `None` for open-topped containers such as plates.
    pub state: Option<ContainerState>,
    pub on: Option<String>,
    pub qualifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldObject {
    pub class_label: String,
    pub location: Location,
}

#[derive(Debug, Clone)]
pub struct World {
    name: String,
    surfaces: BTreeMap<String, String>,
    containers: BTreeMap<String, Container>,
    objects: BTreeMap<String, WorldObject>,
    human_zone: bool,
    hand_id: String,
    zone_id: String,
    static_edges: Vec<RelationEdge>,
    fault_rng: ChaCha8Rng,
    actions_applied: u64,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.surfaces == other.surfaces
            && self.containers == other.containers
            && self.objects == other.objects
            && self.human_zone == other.human_zone
            && self.static_edges == other.static_edges
    }
}

/// Notional layout used to derive directional edges between same-class
/// containers from their qualifiers (x right, y behind).
fn qualifier_position(q: &str) -> Option<(f64, f64)> {
    Some(match q {
        "left" => (-1.0, 0.0),
        "right" => (1.0, 0.0),
        "front" => (0.0, -2.0),
        "back" => (0.0, 2.0),
        _ => return None,
    })
}

fn planar_relation(dx: f64, dy: f64) -> Option<Relation> {
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some(if dx.abs() >= dy.abs() {
        if dx > 0.0 { Relation::RightOf } else { Relation::LeftOf }
    } else if dy > 0.0 {
        Relation::Behind
    } else {
        Relation::InFrontOf
    })
}

impl World {
    pub fn empty() -> World {
        World {
            name: String::new(),
            surfaces: BTreeMap::new(),
            containers: BTreeMap::new(),
            objects: BTreeMap::new(),
            human_zone: false,
            hand_id: HAND_ID.into(),
            zone_id: HUMAN_ZONE_ID.into(),
            static_edges: Vec::new(),
            fault_rng: ChaCha8Rng::seed_from_u64(0),
            actions_applied: 0,
        }
    }

    pub(crate) fn build(
        name: &str,
        surfaces: BTreeMap<String, String>,
        containers: BTreeMap<String, Container>,
        objects: BTreeMap<String, WorldObject>,
        human_zone: bool,
    ) -> Result<World, SimError> {
        let mut world = World { name: name.into(), surfaces, containers, objects, human_zone, ..World::empty() };
        world.static_edges = world.derive_static_edges();
        world.validate()?;
        Ok(world)
    }

    fn derive_static_edges(&self) -> Vec<RelationEdge> {
        let mut edges = Vec::new();
        for (id, c) in &self.containers {
            if let Some(s) = &c.on {
                edges.push(RelationEdge::new(id, Relation::On, s));
            }
        }
        for (a, ca) in &self.containers {
            for (b, cb) in &self.containers {
                if a == b || ca.class_label != cb.class_label {
                    continue;
                }
                let (Some(pa), Some(pb)) = (
                    ca.qualifier.as_deref().and_then(qualifier_position),
                    cb.qualifier.as_deref().and_then(qualifier_position),
                ) else {
                    continue;
                };
                if let Some(rel) = planar_relation(pa.0 - pb.0, pa.1 - pb.1) {
                    edges.push(RelationEdge::new(a, rel, b));
                }
            }
        }
        edges.sort();
        edges
    }

    fn validate(&self) -> Result<(), SimError> {
        let mut ids = BTreeSet::new();
        let reserved = [self.hand_id.as_str(), self.zone_id.as_str()];
        for id in self.surfaces.keys().chain(self.containers.keys()).chain(self.objects.keys()) {
            if reserved.contains(&id.as_str()) || !ids.insert(id) {
                return Err(SimError::InvalidScenario(format!("duplicate or reserved id `{id}`")));
            }
        }
        for (id, c) in &self.containers {
            if let Some(s) = &c.on {
                if !self.surfaces.contains_key(s) {
                    return Err(SimError::InvalidScenario(format!("container `{id}` rests on unknown surface `{s}`")));
                }
            }
        }
        for (id, o) in &self.objects {
            match &o.location {
                Location::OnSurface(s) if !self.surfaces.contains_key(s) => {
                    return Err(SimError::InvalidScenario(format!("object `{id}` on unknown surface `{s}`")))
                }
                Location::InContainer(c) if !self.containers.contains_key(c) => {
                    return Err(SimError::InvalidScenario(format!("object `{id}` in unknown container `{c}`")))
                }
                Location::InHumanZone if !self.human_zone => {
                    return Err(SimError::InvalidScenario(format!("object `{id}` given but scene has no human zone")))
                }
                _ => {}
            }
        }
        if self.held().len() > 1 {
            return Err(SimError::InvalidScenario("more than one object held".into()));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty() && self.containers.is_empty() && self.objects.is_empty() && !self.human_zone
    }

    pub fn surfaces(&self) -> &BTreeMap<String, String> {
        &self.surfaces
    }

    pub fn containers(&self) -> &BTreeMap<String, Container> {
        &self.containers
    }

    pub fn objects(&self) -> &BTreeMap<String, WorldObject> {
        &self.objects
    }

    pub fn has_human_zone(&self) -> bool {
        self.human_zone
    }

    pub fn location_of(&self, object: &str) -> Option<&Location> {
        self.objects.get(object).map(|o| &o.location)
    }

    pub fn container_state(&self, container: &str) -> Option<ContainerState> {
        self.containers.get(container).and_then(|c| c.state)
    }

    pub fn held(&self) -> Vec<&str> {
        self.objects
            .iter()
            .filter(|(_, o)| o.location == Location::InGripper)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn contents(&self, container: &str) -> BTreeSet<String> {
        self.objects
            .iter()
            .filter(|(_, o)| matches!(&o.location, Location::InContainer(c) if c == container))
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn class_of(&self, id: &str) -> Option<&str> {
        self.objects
            .get(id)
            .map(|o| o.class_label.as_str())
            .or_else(|| self.containers.get(id).map(|c| c.class_label.as_str()))
            .or_else(|| self.surfaces.get(id).map(String::as_str))
    }

    pub fn actions_applied(&self) -> u64 {
        self.actions_applied
    }

    /// Restart the fault stream; call once per episode.
    pub fn seed_faults(&mut self, seed: u64) {
        self.fault_rng = ChaCha8Rng::seed_from_u64(seed);
        self.actions_applied = 0;
    }

    pub(crate) fn set_location(&mut self, object: &str, location: Location) -> Result<(), SimError> {
        let o = self
            .objects
            .get_mut(object)
            .ok_or_else(|| SimError::UnknownEntity(object.into()))?;
        o.location = location;
        self.validate()
    }

    pub(crate) fn set_container_state(&mut self, container: &str, state: ContainerState) -> Result<(), SimError> {
        let c = self
            .containers
            .get_mut(container)
            .ok_or_else(|| SimError::UnknownEntity(container.into()))?;
        if c.state.is_none() {
            return Err(SimError::InvalidScenario(format!("container `{container}` has no lid")));
        }
        c.state = Some(state);
        Ok(())
    }

    fn known(&self, id: &str) -> bool {
        self.objects.contains_key(id)
            || self.containers.contains_key(id)
            || self.surfaces.contains_key(id)
            || (self.human_zone && id == self.zone_id)
            || (!self.is_empty() && id == self.hand_id)
    }

    /// Check the precondition table without changing anything.
    pub fn check(&self, step: &ActionStep) -> Result<(), SimError> {
        for id in step.args() {
            if !self.known(id) {
                return Err(SimError::UnknownEntity(id.clone()));
            }
        }
        let fail = |kind| Err(SimError::Precondition { step: step.canonical(), kind });
        let held = self.held();
        let holds = |o: &str| self.location_of(o) == Some(&Location::InGripper);
        let target = step.target();
        match step.verb() {
            Verb::Pick => {
                let Some(obj) = self.objects.get(target) else { return fail(PreconditionKind::NotGraspable) };
                if !held.is_empty() {
                    return fail(PreconditionKind::GripperOccupied);
                }
                match &obj.location {
                    Location::InContainer(c) if self.container_state(c) == Some(ContainerState::Closed) => {
                        fail(PreconditionKind::ContainerClosed)
                    }
                    Location::InHumanZone => fail(PreconditionKind::Unreachable),
                    _ => Ok(()),
                }
            }
            Verb::PlaceIn => {
                let dest = step.destination().unwrap_or_default();
                let Some(c) = self.containers.get(dest) else { return fail(PreconditionKind::NotAContainer) };
                if !holds(target) {
                    return fail(PreconditionKind::NotHeld);
                }
                if c.state == Some(ContainerState::Closed) {
                    return fail(PreconditionKind::ContainerClosed);
                }
                Ok(())
            }
            Verb::PlaceOn => {
                let dest = step.destination().unwrap_or_default();
                if !self.surfaces.contains_key(dest) {
                    return fail(PreconditionKind::NotASurface);
                }
                if !holds(target) {
                    return fail(PreconditionKind::NotHeld);
                }
                Ok(())
            }
            Verb::Open | Verb::Close => {
                let Some(c) = self.containers.get(target) else { return fail(PreconditionKind::NotAContainer) };
                let Some(state) = c.state else { return fail(PreconditionKind::NotOpenable) };
                if !held.is_empty() {
                    return fail(PreconditionKind::GripperOccupied);
                }
                match (step.verb(), state) {
                    (Verb::Open, ContainerState::Open) => fail(PreconditionKind::AlreadyOpen),
                    (Verb::Close, ContainerState::Closed) => fail(PreconditionKind::AlreadyClosed),
                    _ => Ok(()),
                }
            }
            Verb::Give => {
                if !self.human_zone {
                    return fail(PreconditionKind::NoHumanZone);
                }
                if !holds(target) {
                    return fail(PreconditionKind::NotHeld);
                }
                Ok(())
            }
        }
    }

    /// Apply the nominal (fault-free) effect of a step whose preconditions hold.
    fn transition(&mut self, step: &ActionStep) {
        let target = step.target().to_string();
        match step.verb() {
            Verb::Pick => self.objects.get_mut(&target).unwrap().location = Location::InGripper,
            Verb::PlaceIn => {
                let dest = step.destination().unwrap().to_string();
                self.objects.get_mut(&target).unwrap().location = Location::InContainer(dest);
            }
            Verb::PlaceOn => {
                let dest = step.destination().unwrap().to_string();
                self.objects.get_mut(&target).unwrap().location = Location::OnSurface(dest);
            }
            Verb::Open => self.containers.get_mut(&target).unwrap().state = Some(ContainerState::Open),
            Verb::Close => self.containers.get_mut(&target).unwrap().state = Some(ContainerState::Closed),
            Verb::Give => self.objects.get_mut(&target).unwrap().location = Location::InHumanZone,
        }
    }

    fn corrupt(&mut self, step: &ActionStep, mode: FaultMode, prior: Option<Location>) {
        match mode {
            FaultMode::NoOp => {}
            FaultMode::DropAfterPick => {
                if let Some(prior) = prior {
                    self.objects.get_mut(step.target()).unwrap().location = prior;
                }
            }
            FaultMode::WrongPlacement => {
                let intended = step.destination().map(str::to_string);
                let fallback = self
                    .surfaces
                    .keys()
                    .find(|s| Some(*s) != intended.as_ref())
                    .cloned();
                let obj = self.objects.get_mut(step.target()).unwrap();
                match fallback {
                    Some(s) => obj.location = Location::OnSurface(s),
                    // Nowhere else to drop it: the release simply fails.
                    None => obj.location = Location::InGripper,
                }
            }
        }
    }

    /// Execute one step. Precondition failures leave the world unchanged
    /// and consume no fault randomness.
    pub fn apply(&mut self, step: &ActionStep, fault: &FaultConfig) -> Result<ActionOutcome, SimError> {
        self.check(step)?;
        let ordinal = self.actions_applied;
        self.actions_applied += 1;
        let applicable = fault.mode.applies_to(step.verb());
        let fires = applicable
            && (fault.forced_at.contains(&ordinal)
                || (fault.probability > 0.0 && self.fault_rng.random::<f64>() < fault.probability));
        let prior = self.location_of(step.target()).cloned();
        if fires {
            if fault.mode != FaultMode::NoOp {
                self.transition(step);
            }
            self.corrupt(step, fault.mode, prior);
            return Ok(ActionOutcome { step: step.clone(), success: false, fault: Some(fault.mode) });
        }
        self.transition(step);
        Ok(ActionOutcome { step: step.clone(), success: true, fault: None })
    }

    /// Fault-free rollout; stops at the first violated precondition and
    /// reports its index.
    pub fn rollout(&mut self, plan: &[ActionStep]) -> Result<(), (usize, SimError)> {
        for (i, step) in plan.iter().enumerate() {
            self.check(step).map_err(|e| (i, e))?;
            self.transition(step);
        }
        Ok(())
    }

    pub fn observe(&self) -> SceneGraph {
        if self.is_empty() {
            return SceneGraph::empty();
        }
        let mut nodes = vec![SceneNode::new(&self.hand_id, HAND_CLASS)];
        if self.human_zone {
            nodes.push(SceneNode::new(&self.zone_id, HUMAN_ZONE_CLASS));
        }
        for (id, class) in &self.surfaces {
            nodes.push(SceneNode::new(id, class));
        }
        for (id, c) in &self.containers {
            let mut n = SceneNode::new(id, &c.class_label);
            n.state = c.state.map(|s| s.as_str().to_string());
            nodes.push(n);
        }
        let mut edges = self.static_edges.clone();
        for (id, o) in &self.objects {
            nodes.push(SceneNode::new(id, &o.class_label));
            edges.push(match &o.location {
                Location::OnSurface(s) => RelationEdge::new(id, Relation::On, s),
                Location::InContainer(c) => RelationEdge::new(id, Relation::In, c),
                Location::InGripper => RelationEdge::new(id, Relation::Held, &self.hand_id),
                Location::InHumanZone => RelationEdge::new(id, Relation::In, &self.zone_id),
            });
        }
        SceneGraph::new(nodes, edges).expect("world invariants guarantee a valid graph")
    }

    /// Rebuild a world from a scene graph, inferring entity kinds from
    /// states, edges and class hints. Edges among fixtures are preserved
    /// verbatim so that `observe` reproduces the input.
    pub fn from_graph(g: &SceneGraph) -> Result<World, SimError> {
        let mut world = World::empty();
        if g.is_empty() {
            return Ok(world);
        }
        let in_targets: BTreeSet<&str> = g
            .edges()
            .iter()
            .filter(|e| e.relation == Relation::In)
            .map(|e| e.object.as_str())
            .collect();
        let on_targets: BTreeSet<&str> = g
            .edges()
            .iter()
            .filter(|e| e.relation == Relation::On)
            .map(|e| e.object.as_str())
            .collect();
        let mut loose = Vec::new();
        for n in g.nodes() {
            let id = n.id.as_str();
            if n.is_hand() {
                world.hand_id = n.id.clone();
            } else if n.class_label == HUMAN_ZONE_CLASS {
                world.human_zone = true;
                world.zone_id = n.id.clone();
            } else if let Some(state) = n.state.as_deref().and_then(ContainerState::parse) {
                world.containers.insert(n.id.clone(), Container {
                    class_label: n.class_label.clone(),
                    state: Some(state),
                    on: None,
                    qualifier: None,
                });
            } else if in_targets.contains(id) || LIDLESS_HINTS.contains(&n.class_label.as_str()) {
                world.containers.insert(n.id.clone(), Container {
                    class_label: n.class_label.clone(),
                    state: None,
                    on: None,
                    qualifier: None,
                });
            } else if on_targets.contains(id) || SURFACE_HINTS.contains(&n.class_label.as_str()) {
                world.surfaces.insert(n.id.clone(), n.class_label.clone());
            } else {
                loose.push(n);
            }
        }
        let is_fixture = |w: &World, id: &str| {
            w.surfaces.contains_key(id) || w.containers.contains_key(id) || (w.human_zone && id == w.zone_id)
        };
        for e in g.edges() {
            if is_fixture(&world, &e.subject) && is_fixture(&world, &e.object) {
                world.static_edges.push(e.clone());
                if e.relation == Relation::On && world.surfaces.contains_key(&e.object) {
                    if let Some(c) = world.containers.get_mut(&e.subject) {
                        c.on = Some(e.object.clone());
                    }
                }
            }
        }
        for n in loose {
            let mut location = None;
            for e in g.edges_from(&n.id) {
                let candidate = match e.relation {
                    Relation::Held if e.object == world.hand_id => Location::InGripper,
                    Relation::In if world.human_zone && e.object == world.zone_id => Location::InHumanZone,
                    Relation::In if world.containers.contains_key(&e.object) => Location::InContainer(e.object.clone()),
                    Relation::On if world.surfaces.contains_key(&e.object) => Location::OnSurface(e.object.clone()),
                    _ => continue,
                };
                if location.replace(candidate).is_some() {
                    return Err(SimError::InvalidScenario(format!("object `{}` has two locations", n.id)));
                }
            }
            let location = location
                .ok_or_else(|| SimError::InvalidScenario(format!("object `{}` has no location", n.id)))?;
            world.objects.insert(n.id.clone(), WorldObject { class_label: n.class_label.clone(), location });
        }
        world.validate()?;
        Ok(world)
    }

    /// Structural invariants; used by property tests after every action.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.validate().map_err(|e| e.to_string())
    }
}

/// Apply one step; see [`World::apply`].
pub fn apply_action(world: &mut World, step: &ActionStep, fault: &FaultConfig) -> Result<ActionOutcome, SimError> {
    world.apply(step, fault)
}

pub fn observe(world: &World) -> SceneGraph {
    world.observe()
}
