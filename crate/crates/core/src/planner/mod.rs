//! Knowledge-conditioned planning with a planning corrector (pattern
//! consistency + preconditions, then revision) and an execution corrector.

mod episode;
mod validator;

pub use episode::{
    correct_execution, plan_task, postcondition_holds, run_task, EpisodeResult, PlanningOutcome, RunOptions, StageTiming,
};
pub use validator::{explain, validate_plan, validate_world, Validation, Violation};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_step, ActionStep, StepError};
use crate::distiller::{ActionRecord, ObjectPattern, TaskPattern};
use crate::knowledge_base::KbError;
use crate::llm_gateway::{
    format_pattern_knowledge, numbered_action_graphs, numbered_inline, parse_action_list, parse_discrepancy,
    parse_precondition, placeholders, Gateway, GatewayError, TemplateId, UnparseableResponse,
};
use crate::scene_graph::{serialize_compact, serialize_objects_only, serialize_text, SceneGraph};
use crate::simulator::SimError;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Unparseable(#[from] UnparseableResponse),
    #[error("cannot turn `{text}` into an action: {source}")]
    UnresolvableObject { text: String, source: StepError },
    #[error("plan still has discrepancies after {rounds} correction rounds: {}", last.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join(" "))]
    MaxRoundsExceeded { rounds: usize, last: Vec<Discrepancy>, plan: Box<Plan> },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<ActionStep>,
    /// Model text the steps were parsed from.
    pub raw: String,
    /// 0 for the first plan, +1 per revision.
    pub round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyKind {
    KnowledgeMismatch,
    PreconditionViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub kind: DiscrepancyKind,
    pub text: String,
    pub step_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    pub max_plan_rounds: usize,
    pub max_exec_corrections_per_step: usize,
    pub use_deterministic_validator: bool,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig { max_plan_rounds: 3, max_exec_corrections_per_step: 2, use_deterministic_validator: true }
    }
}

impl CorrectionConfig {
    /// Gateway calls allowed for retrieval, planning and the planning corrector.
    pub fn planning_budget(&self) -> usize {
        2 + 3 * self.max_plan_rounds
    }

    /// Hard cap on gateway calls for an episode whose plan has `steps` steps.
    pub fn episode_budget(&self, steps: usize) -> usize {
        self.planning_budget() + steps * (1 + self.max_exec_corrections_per_step)
    }
}

/// Components switched off for ablation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Plan without retrieved knowledge.
    pub no_kb: bool,
    /// Show object names only, no relations, in prompts.
    pub no_sg: bool,
    /// Skip the planning corrector.
    pub no_pc: bool,
    /// Skip the execution corrector.
    pub no_ec: bool,
}

impl Ablation {
    pub const VARIANTS: [&'static str; 5] = ["full", "no_kb", "no_sg", "no_pc", "no_ec"];

    pub fn named(name: &str) -> Option<Ablation> {
        let mut a = Ablation::default();
        match name {
            "full" => {}
            "no_kb" => a.no_kb = true,
            "no_sg" => a.no_sg = true,
            "no_pc" => a.no_pc = true,
            "no_ec" => a.no_ec = true,
            _ => return None,
        }
        Some(a)
    }
}

/// Retrieved knowledge handed to the planner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Knowledge {
    pub task_patterns: Vec<TaskPattern>,
    pub object_patterns: Vec<ObjectPattern>,
    /// Action records used as exemplars by the correctors.
    pub records: Vec<ActionRecord>,
}

impl Knowledge {
    pub fn has_patterns(&self) -> bool {
        !self.task_patterns.is_empty() || !self.object_patterns.is_empty()
    }

    pub fn render(&self) -> String {
        render_patterns(&self.task_patterns, &self.object_patterns)
    }
}

fn render_patterns(task_patterns: &[TaskPattern], object_patterns: &[ObjectPattern]) -> String {
    let tasks: Vec<String> = task_patterns.iter().map(|t| t.text.clone()).collect();
    let objects: Vec<(String, String)> = object_patterns.iter().map(|o| (o.object_class.clone(), o.render())).collect();
    format_pattern_knowledge(&tasks, &objects)
}

/// How the scene graph is written into prompts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SceneView {
    #[default]
    Full,
    ObjectsOnly,
}

impl SceneView {
    pub fn render(self, g: &SceneGraph) -> String {
        match self {
            SceneView::Full => serialize_text(g),
            SceneView::ObjectsOnly => serialize_objects_only(g),
        }
    }
}

/// Steps as numbered sentences, named after `g0`.
pub fn describe_plan(steps: &[ActionStep], g0: &SceneGraph) -> String {
    let text: Vec<String> = steps.iter().map(|s| s.describe(g0)).collect();
    numbered_inline(&text)
}

fn parse_plan(raw: String, g0: &SceneGraph, round: usize) -> Result<Plan, PlannerError> {
    let items = parse_action_list(&raw)?;
    let steps = items
        .iter()
        .map(|item| parse_step(item, g0).map_err(|source| PlannerError::UnresolvableObject { text: item.clone(), source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Plan { steps, raw, round })
}

pub fn plan(
    instruction: &str,
    g0: &SceneGraph,
    task_patterns: &[TaskPattern],
    object_patterns: &[ObjectPattern],
    gateway: &Gateway,
) -> Result<Plan, PlannerError> {
    plan_in_view(instruction, g0, &render_patterns(task_patterns, object_patterns), SceneView::Full, gateway)
}

/// `plan` with pre-rendered pattern knowledge and a chosen scene view.
pub fn plan_in_view(
    instruction: &str,
    g0: &SceneGraph,
    pattern_knowledge: &str,
    view: SceneView,
    gateway: &Gateway,
) -> Result<Plan, PlannerError> {
    let raw = gateway.complete(
        TemplateId::Plan,
        placeholders([
            ("instruction", instruction.to_string()),
            ("scene_graph", view.render(g0)),
            ("pattern_knowledge", pattern_knowledge.to_string()),
        ]),
    )?;
    parse_plan(raw, g0, 0)
}

/// `None` when the plan agrees with the patterns or there are none.
pub fn check_knowledge_consistency(
    instruction: &str,
    plan: &Plan,
    g0: &SceneGraph,
    task_patterns: &[TaskPattern],
    object_patterns: &[ObjectPattern],
    gateway: &Gateway,
) -> Result<Option<Discrepancy>, PlannerError> {
    if task_patterns.is_empty() && object_patterns.is_empty() {
        return Ok(None);
    }
    let answer = gateway.complete(
        TemplateId::PlanConsistency,
        placeholders([
            ("instruction", instruction.to_string()),
            ("pattern_knowledge", render_patterns(task_patterns, object_patterns)),
            ("planned_actions", describe_plan(&plan.steps, g0)),
        ]),
    )?;
    Ok(parse_discrepancy(&answer)?.map(|text| Discrepancy {
        kind: DiscrepancyKind::KnowledgeMismatch,
        text,
        step_index: None,
    }))
}

/// Records whose verbs occur in `steps`, at most `limit`.
fn precondition_exemplars(records: &[ActionRecord], steps: &[ActionStep], limit: usize) -> Vec<(String, String)> {
    let verbs: BTreeSet<_> = steps.iter().map(ActionStep::verb).collect();
    records
        .iter()
        .filter(|r| r.step.as_ref().is_some_and(|s| verbs.contains(&s.verb())))
        .take(limit)
        .map(|r| (r.description.clone(), serialize_compact(&r.preceding_graph)))
        .collect()
}

/// Inferred preceding graph of each step and the first violation, if any.
pub fn check_preconditions(
    plan: &Plan,
    g0: &SceneGraph,
    records: &[ActionRecord],
    gateway: &Gateway,
    config: &CorrectionConfig,
) -> Result<(Vec<SceneGraph>, Option<Discrepancy>), PlannerError> {
    check_preconditions_in_view(plan, g0, records, gateway, config, SceneView::Full)
}

pub fn check_preconditions_in_view(
    plan: &Plan,
    g0: &SceneGraph,
    records: &[ActionRecord],
    gateway: &Gateway,
    config: &CorrectionConfig,
    view: SceneView,
) -> Result<(Vec<SceneGraph>, Option<Discrepancy>), PlannerError> {
    if config.use_deterministic_validator {
        let v = validate_plan(g0, &plan.steps)?;
        let d = v.violation.map(|viol| Discrepancy {
            kind: DiscrepancyKind::PreconditionViolation,
            text: viol.explanation,
            step_index: Some(viol.step_index),
        });
        return Ok((v.graphs, d));
    }
    let answer = gateway.complete(
        TemplateId::PlanPrecondition,
        placeholders([
            ("exemplars", numbered_action_graphs(&precondition_exemplars(records, &plan.steps, 6))),
            ("scene_graph", view.render(g0)),
            ("planned_actions", describe_plan(&plan.steps, g0)),
        ]),
    )?;
    let parsed = parse_precondition(&answer)?;
    let d = (!parsed.compliant).then(|| Discrepancy {
        kind: DiscrepancyKind::PreconditionViolation,
        text: parsed.summary.unwrap_or_else(|| "The plan violates an execution condition.".into()),
        step_index: None,
    });
    Ok((parsed.graphs, d))
}

pub fn revise_plan(
    instruction: &str,
    plan: &Plan,
    g0: &SceneGraph,
    discrepancies: &[Discrepancy],
    gateway: &Gateway,
) -> Result<Plan, PlannerError> {
    revise_plan_in_view(instruction, plan, g0, discrepancies, gateway, SceneView::Full)
}

pub fn revise_plan_in_view(
    instruction: &str,
    plan: &Plan,
    g0: &SceneGraph,
    discrepancies: &[Discrepancy],
    gateway: &Gateway,
    view: SceneView,
) -> Result<Plan, PlannerError> {
    let explanation: Vec<&str> = discrepancies.iter().map(|d| d.text.as_str()).collect();
    let raw = gateway.complete(
        TemplateId::PlanRevise,
        placeholders([
            ("instruction", instruction.to_string()),
            ("scene_graph", view.render(g0)),
            ("planned_actions", describe_plan(&plan.steps, g0)),
            ("failure_explanation", explanation.join(" ")),
        ]),
    )?;
    parse_plan(raw, g0, plan.round + 1)
}

/// Result of the planning corrector.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedPlan {
    pub plan: Plan,
    /// Inferred preceding graphs of the accepted plan.
    pub inferred: Vec<SceneGraph>,
    pub discrepancies: Vec<Discrepancy>,
}

/// Check-and-revise loop. Each round checks pattern consistency and
/// preconditions; a plan with no discrepancy is returned unchanged.
pub fn correct_plan(
    instruction: &str,
    initial: Plan,
    g0: &SceneGraph,
    knowledge: &Knowledge,
    gateway: &Gateway,
    config: &CorrectionConfig,
    view: SceneView,
) -> Result<CorrectedPlan, PlannerError> {
    let mut plan = initial;
    let mut history = Vec::new();
    for round in 0..config.max_plan_rounds {
        let mut found = Vec::new();
        if let Some(d) = check_knowledge_consistency(
            instruction,
            &plan,
            g0,
            &knowledge.task_patterns,
            &knowledge.object_patterns,
            gateway,
        )? {
            found.push(d);
        }
        let (inferred, violation) = check_preconditions_in_view(&plan, g0, &knowledge.records, gateway, config, view)?;
        found.extend(violation);
        if found.is_empty() {
            return Ok(CorrectedPlan { plan, inferred, discrepancies: history });
        }
        tracing::info!(round, discrepancies = found.len(), "revising plan");
        history.extend(found.iter().cloned());
        if round + 1 == config.max_plan_rounds {
            return Err(PlannerError::MaxRoundsExceeded {
                rounds: config.max_plan_rounds,
                last: found,
                plan: Box::new(plan),
            });
        }
        plan = revise_plan_in_view(instruction, &plan, g0, &found, gateway, view)?;
    }
    Ok(CorrectedPlan { plan, inferred: Vec::new(), discrepancies: history })
}
