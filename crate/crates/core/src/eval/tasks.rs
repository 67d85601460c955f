//! The 15-task evaluation suite and its demonstration set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::ActionStep;
use crate::scene_graph::Recording;
use crate::simulator::{bundled_scenario, synthesize_demo, ContainerState, GoalSpec, SimError, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: u32,
    pub description: String,
    pub step_count: usize,
    pub scene: String,
    pub kind: TaskKind,
    /// Object placements that differ from the scenario defaults.
    #[serde(default)]
    pub initial: BTreeMap<String, String>,
    #[serde(default)]
    pub states: BTreeMap<String, ContainerState>,
    pub goal: GoalSpec,
    /// Distractor variations never touch task objects, so a single plan
    /// serves every initial-state seed.
    pub ground_truth: Vec<ActionStep>,
}

impl TaskSpec {
    pub fn world(&self, variation_seed: u64) -> Result<World, SimError> {
        let scenario = bundled_scenario(&self.scene)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown scene `{}`", self.scene)))?;
        scenario.instantiate_with(variation_seed, &self.initial, &self.states)
    }

    pub fn ground_truth_plan(&self, _seed: u64) -> &[ActionStep] {
        &self.ground_truth
    }

    pub fn demo_id(&self) -> String {
        format!("{}_task{}", self.scene, self.id)
    }
}

/// An extra demonstration not tied to an evaluation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSpec {
    pub id: String,
    pub scenario: String,
    pub instruction: String,
    #[serde(default)]
    pub initial: BTreeMap<String, String>,
    pub plan: Vec<ActionStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSuite {
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub demonstrations: Vec<DemoSpec>,
}

impl TaskSuite {
    pub fn bundled() -> TaskSuite {
        serde_json::from_str(include_str!("../../fixtures/tasks.json")).expect("bundled task suite parses")
    }

    pub fn task(&self, id: u32) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn of_kind(&self, kind: TaskKind) -> Vec<&TaskSpec> {
        self.tasks.iter().filter(|t| t.kind == kind).collect()
    }

    /// Demonstration recordings: one per seen task (variation 0), followed
    /// by the extra demonstrations, in a fixed order.
    pub fn recordings(&self) -> Result<Vec<Recording>, SimError> {
        let mut out = Vec::new();
        for t in self.of_kind(TaskKind::Seen) {
            out.push(synthesize_demo(&t.world(0)?, &t.ground_truth, &t.demo_id(), Some(&t.description))?);
        }
        for d in &self.demonstrations {
            let scenario = bundled_scenario(&d.scenario)
                .ok_or_else(|| SimError::InvalidScenario(format!("unknown scene `{}`", d.scenario)))?;
            let world = scenario.instantiate_with(0, &d.initial, &BTreeMap::new())?;
            out.push(synthesize_demo(&world, &d.plan, &d.id, Some(&d.instruction))?);
        }
        Ok(out)
    }
}
