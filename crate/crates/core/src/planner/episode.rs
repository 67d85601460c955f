//! Retrieve → plan → correct → execute, one episode at a time.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::action::{parse_step, ActionStep, Verb};
use crate::distiller::ActionRecord;
use crate::knowledge_base::{Embedder, KnowledgeBase, DEFAULT_TOP_N};
use crate::llm_gateway::{
    numbered_action_graphs, parse_verdict, placeholders, Gateway, TemplateId, Verdict,
};
use crate::scene_graph::{serialize_compact, Relation, SceneGraph};
use crate::simulator::{goal_satisfied, render_frame, FaultConfig, GoalSpec, World, HUMAN_ZONE_CLASS};

use super::{
    correct_plan, plan_in_view, Ablation, CorrectionConfig, Knowledge, Plan, PlannerError, SceneView,
};

const EXEMPLARS: usize = 3;

/// Whether `resulting` shows the expected effect of `step`.
pub fn postcondition_holds(step: &ActionStep, resulting: &SceneGraph) -> bool {
    let target = step.target();
    match step.verb() {
        Verb::Pick => resulting.edges_from(target).any(|e| e.relation == Relation::Held),
        Verb::PlaceIn => resulting.has_edge(target, Relation::In, step.destination().unwrap_or_default()),
        Verb::PlaceOn => resulting.has_edge(target, Relation::On, step.destination().unwrap_or_default()),
        Verb::Open => resulting.state_of(target) == Some("open"),
        Verb::Close => resulting.state_of(target) == Some("closed"),
        Verb::Give => resulting
            .nodes()
            .iter()
            .filter(|n| n.class_label == HUMAN_ZONE_CLASS)
            .any(|z| resulting.has_edge(target, Relation::In, &z.id)),
    }
}

fn deterministic_verdict(step: &ActionStep, resulting: &SceneGraph, names: &SceneGraph) -> Verdict {
    if postcondition_holds(step, resulting) {
        return Verdict { success: true, explanation: String::new(), correction: None };
    }
    let held = resulting.edges_from(step.target()).any(|e| e.relation == Relation::Held);
    let mut correction = Vec::new();
    if matches!(step.verb(), Verb::PlaceIn | Verb::PlaceOn | Verb::Give) && !held {
        correction.push(ActionStep::pick(step.target()).describe(names));
    }
    correction.push(step.describe(names));
    Verdict {
        success: false,
        explanation: format!("The expected result of \"{}\" is not observed", step.describe(names)),
        correction: Some(correction),
    }
}

/// Up to three records with the same verb, else with the same target class.
fn analogous_records<'a>(step: &ActionStep, names: &SceneGraph, records: &'a [ActionRecord]) -> Vec<&'a ActionRecord> {
    let same_verb: Vec<&ActionRecord> =
        records.iter().filter(|r| r.step.as_ref().is_some_and(|s| s.verb() == step.verb())).take(EXEMPLARS).collect();
    if !same_verb.is_empty() {
        return same_verb;
    }
    let class = names.class_of(step.target());
    records
        .iter()
        .filter(|r| r.step.as_ref().is_some_and(|s| class.is_some() && r.preceding_graph.class_of(s.target()) == class))
        .take(EXEMPLARS)
        .collect()
}

/// Judge one executed step from its pruned resulting graph. `names` is the
/// full observation, used to name objects. Without analogous records the
/// expected postcondition is checked directly and no call is made.
pub fn correct_execution(
    executed: &ActionStep,
    resulting: &SceneGraph,
    names: &SceneGraph,
    records: &[ActionRecord],
    gateway: &Gateway,
) -> Result<Verdict, PlannerError> {
    let exemplars = analogous_records(executed, names, records);
    if exemplars.is_empty() {
        return Ok(deterministic_verdict(executed, resulting, names));
    }
    let pairs: Vec<(String, String)> =
        exemplars.iter().map(|r| (r.description.clone(), serialize_compact(&r.resulting_graph))).collect();
    let answer = gateway.complete(
        TemplateId::ExecutionCheck,
        placeholders([
            ("exemplars", numbered_action_graphs(&pairs)),
            ("executed_action", executed.describe(names)),
            ("resulting_graph", serialize_compact(resulting)),
        ]),
    )?;
    Ok(parse_verdict(&answer)?)
}

#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub kb: Option<&'a KnowledgeBase>,
    pub embedder: &'a dyn Embedder,
    pub top_n: usize,
    pub correction: CorrectionConfig,
    pub ablation: Ablation,
    pub faults: &'a FaultConfig,
}

impl<'a> RunOptions<'a> {
    pub fn new(kb: Option<&'a KnowledgeBase>, embedder: &'a dyn Embedder, faults: &'a FaultConfig) -> Self {
        RunOptions {
            kb,
            embedder,
            top_n: DEFAULT_TOP_N,
            correction: CorrectionConfig::default(),
            ablation: Ablation::default(),
            faults,
        }
    }

    fn view(&self) -> SceneView {
        if self.ablation.no_sg {
            SceneView::ObjectsOnly
        } else {
            SceneView::Full
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTiming {
    pub retrieve: Duration,
    pub plan: Duration,
    pub correct: Duration,
    pub execute: Duration,
}

#[derive(Debug)]
pub struct PlanningOutcome {
    pub knowledge: Knowledge,
    pub initial: Option<Plan>,
    /// Last plan produced: the accepted one, or the last revision tried.
    pub last: Option<Plan>,
    pub accepted: bool,
    pub error: Option<PlannerError>,
    pub timing: StageTiming,
}

fn retrieve(instruction: &str, world: &World, gateway: &Gateway, options: &RunOptions) -> Result<Knowledge, PlannerError> {
    let Some(kb) = options.kb.filter(|_| !options.ablation.no_kb) else { return Ok(Knowledge::default()) };
    let task_patterns = kb.retrieve_task_knowledge(instruction, gateway)?;
    let g0 = world.observe();
    let classes: BTreeSet<String> = g0.nodes().iter().map(|n| n.class_label.clone()).collect();
    let frame = render_frame(world, 0);
    let mut object_patterns = Vec::new();
    for p in kb.retrieve_object_knowledge(&frame, &classes, options.embedder, options.top_n.max(1))? {
        if !object_patterns.contains(&p) {
            object_patterns.push(p);
        }
    }
    let ranked = kb.rank_visual(&options.embedder.embed(&frame))?;
    let records = ranked
        .iter()
        .take(options.top_n.max(1))
        .flat_map(|(i, _)| kb.entries()[*i].action_records.iter().cloned())
        .collect();
    Ok(Knowledge { task_patterns, object_patterns, records })
}

/// Retrieval, planning and the planning corrector, without execution.
pub fn plan_task(instruction: &str, world: &World, gateway: &Gateway, options: &RunOptions) -> PlanningOutcome {
    let mut out = PlanningOutcome {
        knowledge: Knowledge::default(),
        initial: None,
        last: None,
        accepted: false,
        error: None,
        timing: StageTiming::default(),
    };
    let t = Instant::now();
    match retrieve(instruction, world, gateway, options) {
        Ok(k) => out.knowledge = k,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    }
    out.timing.retrieve = t.elapsed();
    let g0 = world.observe();
    let view = options.view();
    let t = Instant::now();
    let initial = match plan_in_view(instruction, &g0, &out.knowledge.render(), view, gateway) {
        Ok(p) => p,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    out.timing.plan = t.elapsed();
    out.initial = Some(initial.clone());
    if options.ablation.no_pc {
        out.last = Some(initial);
        out.accepted = true;
        return out;
    }
    let t = Instant::now();
    match correct_plan(instruction, initial, &g0, &out.knowledge, gateway, &options.correction, view) {
        Ok(c) => {
            out.last = Some(c.plan);
            out.accepted = true;
        }
        Err(PlannerError::MaxRoundsExceeded { rounds, last, plan }) => {
            out.last = Some((*plan).clone());
            out.error = Some(PlannerError::MaxRoundsExceeded { rounds, last, plan });
        }
        Err(e) => out.error = Some(e),
    }
    out.timing.correct = t.elapsed();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub instruction: String,
    pub success: bool,
    pub initial_plan: Vec<ActionStep>,
    pub planned: Vec<ActionStep>,
    /// Every step the robot attempted, corrections included.
    pub executed: Vec<ActionStep>,
    pub plan_revisions: usize,
    pub exec_corrections: usize,
    pub gateway_calls: usize,
    /// Indices into `planned` of steps still failing after all corrections.
    pub failed_steps: Vec<usize>,
    pub cause: Option<String>,
    #[serde(skip)]
    pub timing: StageTiming,
}

/// Drop the tail of `correction` that repeats the head of `upcoming`.
fn trim_overlap(mut correction: Vec<ActionStep>, upcoming: &[ActionStep]) -> Vec<ActionStep> {
    let k = (1..correction.len())
        .rev()
        .find(|&k| upcoming.len() >= k && correction[correction.len() - k..] == upcoming[..k])
        .unwrap_or(0);
    correction.truncate(correction.len() - k);
    correction
}

fn resolve_correction(text: &[String], full: &SceneGraph) -> Option<Vec<ActionStep>> {
    let steps: Option<Vec<ActionStep>> = text.iter().map(|t| parse_step(t, full).ok()).collect();
    steps.filter(|s| !s.is_empty())
}

/// Run one episode on `world` and report whether `goal` holds at the end.
/// Planning failures and exhausted correction bounds end the episode as a
/// failure with a `cause`; they are not errors.
pub fn run_task(instruction: &str, world: &mut World, goal: &GoalSpec, gateway: &Gateway, options: &RunOptions) -> EpisodeResult {
    let config = options.correction;
    let gw = gateway.fork(Some(config.planning_budget()));
    world.seed_faults(options.faults.seed);
    let planning = plan_task(instruction, world, &gw, options);
    let mut result = EpisodeResult {
        instruction: instruction.to_string(),
        success: false,
        initial_plan: planning.initial.as_ref().map(|p| p.steps.clone()).unwrap_or_default(),
        planned: planning.last.as_ref().map(|p| p.steps.clone()).unwrap_or_default(),
        executed: Vec::new(),
        plan_revisions: planning.last.as_ref().map_or(0, |p| p.round),
        exec_corrections: 0,
        gateway_calls: gw.calls(),
        failed_steps: Vec::new(),
        cause: None,
        timing: planning.timing,
    };
    if let Some(e) = planning.error {
        result.cause = Some(e.to_string());
        return result;
    }
    let planned = result.planned.clone();
    let gw = gw.with_budget(Some(config.episode_budget(planned.len())));
    let records = &planning.knowledge.records;
    let start = Instant::now();
    'steps: for (i, step) in planned.iter().enumerate() {
        let mut pending = vec![step.clone()];
        let mut checks = 0;
        loop {
            let mut last = step.clone();
            for s in &pending {
                last = s.clone();
                match world.apply(s, options.faults) {
                    Ok(_) => result.executed.push(s.clone()),
                    Err(e) => {
                        tracing::info!(step = %s, %e, "step not executable");
                        break;
                    }
                }
            }
            if options.ablation.no_ec {
                break;
            }
            let full = world.observe();
            let pruned = match full.prune(&last.ids()) {
                Ok(g) => g,
                Err(e) => {
                    result.cause = Some(e.to_string());
                    break 'steps;
                }
            };
            let verdict = match correct_execution(&last, &pruned, &full, records, &gw) {
                Ok(v) => v,
                Err(e) => {
                    result.cause = Some(e.to_string());
                    break 'steps;
                }
            };
            checks += 1;
            if verdict.success {
                break;
            }
            if checks > config.max_exec_corrections_per_step {
                result.failed_steps.push(i);
                break;
            }
            let correction = verdict
                .correction
                .as_deref()
                .and_then(|c| resolve_correction(c, &full))
                .map(|c| trim_overlap(c, &planned[i + 1..]))
                .filter(|c| !c.is_empty())
                .unwrap_or_else(|| vec![step.clone()]);
            tracing::info!(step = %step, correction = ?correction, "execution correction");
            result.exec_corrections += 1;
            pending = correction;
        }
    }
    result.timing.execute = start.elapsed();
    result.gateway_calls = gw.calls();
    result.success = result.cause.is_none() && goal_satisfied(world, goal);
    if !result.success && result.cause.is_none() {
        result.cause = Some(if result.failed_steps.is_empty() {
            "goal not reached".into()
        } else {
            format!("steps {:?} failed after all corrections", result.failed_steps)
        });
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::bundled_scenario;

    #[test]
    fn overlap_with_upcoming_steps_is_trimmed() {
        let c = vec![ActionStep::pick("drink"), ActionStep::place_on("drink", "table")];
        let upcoming = [ActionStep::place_on("drink", "table"), ActionStep::close("drawer")];
        assert_eq!(trim_overlap(c.clone(), &upcoming), [ActionStep::pick("drink")]);
        assert_eq!(trim_overlap(c.clone(), &[]), c);
        // A correction is never trimmed to nothing.
        assert_eq!(trim_overlap(vec![ActionStep::pick("drink")], &[ActionStep::pick("drink")]), [ActionStep::pick("drink")]);
    }

    #[test]
    fn fallback_verdict_without_records() {
        let w = bundled_scenario("desk").unwrap().instantiate(0).unwrap();
        let g = w.observe();
        let gw = Gateway::new(std::sync::Arc::new(crate::llm_gateway::ScriptedClient::symbolic()));
        let v = correct_execution(&ActionStep::pick("pen"), &g, &g, &[], &gw).unwrap();
        assert!(!v.success);
        assert_eq!(v.correction.unwrap(), ["Pick up the pen"]);
        assert_eq!(gw.calls(), 0);
        let v = correct_execution(&ActionStep::place_on("pen", "table"), &g, &g, &[], &gw).unwrap();
        assert!(v.success);
    }
}
