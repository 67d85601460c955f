//! Symbolic precondition check: roll the plan forward through the simulator
//! transition table and explain the first violation.

use crate::action::{object_name, ActionStep, Verb};
use crate::scene_graph::SceneGraph;
use crate::simulator::{FaultConfig, PreconditionKind, SimError, World};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub step_index: usize,
    pub error: SimError,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    /// Inferred preceding graph of every step checked; `|plan|` entries for
    /// a valid plan.
    pub graphs: Vec<SceneGraph>,
    pub violation: Option<Violation>,
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        self.violation.is_none()
    }
}

/// Validate `plan` from the world described by `g0`.
pub fn validate_plan(g0: &SceneGraph, plan: &[ActionStep]) -> Result<Validation, SimError> {
    Ok(validate_world(&World::from_graph(g0)?, plan, g0))
}

/// Validate `plan` from `world`; `names` supplies the object names used in
/// explanations.
pub fn validate_world(world: &World, plan: &[ActionStep], names: &SceneGraph) -> Validation {
    let mut w = world.clone();
    let mut graphs = Vec::with_capacity(plan.len());
    for (i, step) in plan.iter().enumerate() {
        graphs.push(w.observe());
        if let Err(error) = w.check(step) {
            let explanation = explain(&w, plan, i, &error, names);
            return Validation { graphs, violation: Some(Violation { step_index: i, error, explanation }) };
        }
        w.apply(step, &FaultConfig::none()).expect("checked step applies");
    }
    Validation { graphs, violation: None }
}

fn verb_phrase(step: &ActionStep, name: &dyn Fn(&str) -> String) -> String {
    let target = name(step.target());
    match step.verb() {
        Verb::Pick => format!("pick up the {target}"),
        Verb::PlaceIn => format!("put the {target} in the {}", name(step.destination().unwrap_or_default())),
        Verb::PlaceOn => format!("put the {target} on the {}", name(step.destination().unwrap_or_default())),
        Verb::Open => format!("open the {target}"),
        Verb::Close => format!("close the {target}"),
        Verb::Give => format!("hand over the {target}"),
    }
}

/// One-sentence explanation of why `plan[index]` cannot run in `world`.
pub fn explain(world: &World, plan: &[ActionStep], index: usize, error: &SimError, names: &SceneGraph) -> String {
    let name = |id: &str| object_name(names, id);
    let step = &plan[index];
    let target = name(step.target());
    let kind = match error {
        SimError::Precondition { kind, .. } => *kind,
        SimError::UnknownEntity(id) => return format!("The {} does not exist in the scene.", id.replace('_', " ")),
        SimError::InvalidScenario(msg) => return format!("The scene is inconsistent: {msg}."),
    };
    match kind {
        PreconditionKind::GripperOccupied => {
            let held = world.held().first().map(|h| name(h)).unwrap_or_else(|| "object".into());
            format!("The robot should first place the {held} and then {}.", verb_phrase(step, &name))
        }
        PreconditionKind::ContainerClosed => match step.verb() {
            Verb::Pick => {
                let container = world
                    .location_of(step.target())
                    .and_then(|l| match l {
                        crate::simulator::Location::InContainer(c) => Some(name(c)),
                        _ => None,
                    })
                    .unwrap_or_else(|| "container".into());
                format!("The robot should first open the {container} and then pick up the {target}.")
            }
            _ => format!(
                "The robot should first open the {} and then put the {target} in it.",
                name(step.destination().unwrap_or_default())
            ),
        },
        PreconditionKind::NotHeld => match step.verb() {
            Verb::Give => format!("The robot should first pick up the {target} and then hand it over."),
            _ => format!("The robot should first pick up the {target} and then place it."),
        },
        PreconditionKind::AlreadyOpen => format!("The {target} is already open."),
        PreconditionKind::AlreadyClosed => format!("The {target} is already closed."),
        PreconditionKind::NotOpenable => format!("The {target} has no lid to open or close."),
        PreconditionKind::NotAContainer => {
            let t = if step.verb() == Verb::PlaceIn { name(step.destination().unwrap_or_default()) } else { target };
            format!("The {t} is not a container.")
        }
        PreconditionKind::NotASurface => {
            format!("The {} is not a surface.", name(step.destination().unwrap_or_default()))
        }
        PreconditionKind::NotGraspable => format!("The {target} cannot be picked up."),
        PreconditionKind::NoHumanZone => format!("There is no person to hand the {target} to."),
        PreconditionKind::Unreachable => format!("The {target} has already been handed over."),
    }
}
