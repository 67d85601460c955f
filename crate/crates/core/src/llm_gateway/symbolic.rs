//! Rule-based stand-in for the language model. It reads the structured
//! placeholders of each template and answers in the requested shape, so
//! the whole pipeline runs offline and deterministically.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use super::parse::{numbered_items, trim_item};
use super::{numbered_inline, parse_action_list, Placeholders, TemplateId, NONE_SENTINEL};
use crate::action::{object_name, parse_sentence, parse_step, resolve_object, ActionStep, RawAction, Verb};
use crate::planner::validate_world;
use crate::scene_graph::{parse_text, serialize_compact, Relation, SceneGraph};
use crate::simulator::{ContainerState, FaultConfig, Location, World, HUMAN_ZONE_CLASS};

const STOPWORDS: [&str; 34] = [
    "a", "an", "the", "and", "or", "in", "into", "on", "onto", "it", "its", "me", "my", "to", "of", "up", "please",
    "put", "help", "with", "from", "them", "then", "each", "is", "be", "i", "you", "this", "that", "for", "some",
    "all", "at",
];

/// Category words used when summarizing what a container holds.
const CATEGORIES: [(&str, &[&str]); 4] = [
    ("snacks", &["cake", "cookie", "chips"]),
    ("stationery", &["pen", "eraser", "ruler"]),
    ("fruits", &["apple", "banana"]),
    ("tools", &["screwdriver", "tape", "pincers"]),
];

const CANNOT: &str = "I am unable to answer this request.";

pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(str::to_string)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn get<'a>(p: &'a Placeholders, key: &str) -> &'a str {
    p.get(key).map(String::as_str).unwrap_or("")
}

fn graph_of(p: &Placeholders, key: &str) -> SceneGraph {
    parse_text(get(p, key)).unwrap_or_else(|_| SceneGraph::empty())
}

/// Answer one request.
pub fn respond(template: TemplateId, p: &Placeholders) -> String {
    match template {
        TemplateId::ActionExtract => action_extract(p),
        TemplateId::PatternDistill => pattern_distill(p),
        TemplateId::TaskRetrieve => task_retrieve(p),
        TemplateId::Plan => plan(p),
        TemplateId::PlanConsistency => consistency(p),
        TemplateId::PlanPrecondition => precondition(p),
        TemplateId::PlanRevise => revise(p),
        TemplateId::ExecutionCheck => execution_check(p),
    }
}

fn location_in(g: &SceneGraph, id: &str) -> Option<(Relation, String)> {
    g.edges_from(id)
        .find(|e| matches!(e.relation, Relation::In | Relation::On | Relation::Held))
        .map(|e| (e.relation, e.object.clone()))
}

fn action_extract(p: &Placeholders) -> String {
    let (Ok(first), Ok(second)) = (parse_text(get(p, "first_graph")), parse_text(get(p, "second_graph"))) else {
        return CANNOT.into();
    };
    let name = |id: &str| object_name(&second, id);
    for n in second.nodes() {
        let before = first.state_of(&n.id);
        match (before, n.state.as_deref()) {
            (Some("closed"), Some("open")) => return format!("Open the {}.", name(&n.id)),
            (Some("open"), Some("closed")) => return format!("Close the {}.", name(&n.id)),
            _ => {}
        }
    }
    for n in second.nodes() {
        if n.is_hand() {
            continue;
        }
        let (Some(before), Some(after)) = (location_in(&first, &n.id), location_in(&second, &n.id)) else { continue };
        if before == after {
            continue;
        }
        let obj = name(&n.id);
        return match after {
            (Relation::Held, _) => format!("Pick up {obj}."),
            (Relation::In, dest) if second.class_of(&dest) == Some(HUMAN_ZONE_CLASS) => format!("Give {obj} to me."),
            (Relation::In, dest) => format!("Put {obj} in the {}.", name(&dest)),
            (_, dest) => format!("Put {obj} on the {}.", name(&dest)),
        };
    }
    "Nothing appears to have changed between the two frames.".into()
}

/// `k. <action>; <graph>` items from [`super::numbered_action_graphs`].
fn action_graph_items(text: &str) -> Vec<(String, String)> {
    if text.trim() == NONE_SENTINEL {
        return Vec::new();
    }
    numbered_items(text)
        .iter()
        .map(|item| {
            let item = trim_item(item);
            match item.split_once("; ") {
                Some((a, g)) => (a.trim().to_string(), g.trim().to_string()),
                None => (item, String::new()),
            }
        })
        .collect()
}

fn category_of(class: &str) -> Option<&'static str> {
    CATEGORIES.iter().find(|(_, members)| members.contains(&class)).map(|(c, _)| *c)
}

fn describe_contents(g: &SceneGraph, items: &[String]) -> String {
    let classes: Vec<&str> = items.iter().filter_map(|i| g.class_of(i)).collect();
    if let Some(cat) = classes.first().and_then(|c| category_of(c)) {
        if classes.iter().all(|c| category_of(c) == Some(cat)) {
            return cat.to_string();
        }
    }
    let names: Vec<String> = items.iter().map(|i| format!("the {}", object_name(g, i))).collect();
    match names.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn pattern_distill(p: &Placeholders) -> String {
    let initial = graph_of(p, "initial_graph");
    let instruction = get(p, "instruction").trim().trim_end_matches('.');
    let actions = action_graph_items(get(p, "actions"));
    let steps: Vec<ActionStep> = actions.iter().filter_map(|(a, _)| parse_step(a, &initial).ok()).collect();
    let requested: BTreeSet<&str> = get(p, "objects").split(", ").map(str::trim).collect();
    let wanted = |id: &str| initial.class_of(id).is_some_and(|c| requested.contains(c));

    let mut sentences = Vec::new();
    let mut items: Vec<&str> = Vec::new();
    let mut containers: Vec<&str> = Vec::new();
    for s in &steps {
        match s.verb() {
            Verb::PlaceIn | Verb::PlaceOn | Verb::Give => {
                if !items.contains(&s.target()) {
                    items.push(s.target());
                }
                if s.verb() == Verb::PlaceIn && !containers.contains(&s.destination().unwrap()) {
                    containers.push(s.destination().unwrap());
                }
            }
            Verb::Open | Verb::Close if !containers.contains(&s.target()) => containers.push(s.target()),
            _ => {}
        }
    }
    for item in items.iter().filter(|i| wanted(i)) {
        let last = steps.iter().rev().find(|s| s.target() == *item && s.destination().is_some() || s.verb() == Verb::Give && s.target() == *item);
        let Some(last) = last else { continue };
        let obj = object_name(&initial, item);
        sentences.push(match (last.verb(), last.destination()) {
            (Verb::PlaceIn, Some(d)) => format!("The {obj} tends to be placed in the {}.", object_name(&initial, d)),
            (Verb::PlaceOn, Some(d)) => format!("The {obj} tends to be placed on the {}.", object_name(&initial, d)),
            _ => format!("The {obj} tends to be handed over to the person."),
        });
    }
    let touched: BTreeSet<&str> = steps.iter().map(|s| s.target()).collect();
    for c in containers.iter().filter(|c| wanted(c)) {
        let mut contents: Vec<String> = Vec::new();
        for s in &steps {
            if s.verb() == Verb::PlaceIn && s.destination() == Some(*c) && !contents.iter().any(|x| x == s.target()) {
                contents.push(s.target().to_string());
            }
        }
        if contents.is_empty() {
            contents = initial
                .edges()
                .iter()
                .filter(|e| e.relation == Relation::In && e.object == *c && touched.contains(e.subject.as_str()))
                .map(|e| e.subject.clone())
                .collect();
        }
        if contents.is_empty() {
            continue;
        }
        let support = initial
            .edges_from(c)
            .find(|e| e.relation == Relation::On)
            .map(|e| format!(" on the {}", object_name(&initial, &e.object)))
            .unwrap_or_default();
        sentences.push(format!(
            "The {}{support} tends to contain {}.",
            object_name(&initial, c),
            describe_contents(&initial, &contents)
        ));
    }
    let step_text: Vec<String> = actions.iter().map(|(a, _)| trim_item(a)).collect();
    let task = if step_text.is_empty() {
        instruction.to_string()
    } else {
        format!("{instruction}: {}", step_text.join("; "))
    };
    let objects = if sentences.is_empty() { "None.".to_string() } else { sentences.join(" ") };
    format!("1. {task}. 2. {objects}")
}

fn numbered_line_items(text: &str) -> Vec<(usize, String)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*(\d+)\.\s*(.*)$").unwrap());
    text.lines()
        .filter_map(|l| re.captures(l).map(|c| (c[1].parse().unwrap(), c[2].to_string())))
        .collect()
}

fn task_retrieve(p: &Placeholders) -> String {
    let query = content_tokens(get(p, "instruction"));
    let hits: Vec<String> = numbered_line_items(get(p, "previous_tasks"))
        .into_iter()
        .filter(|(_, key)| !content_tokens(key).is_disjoint(&query))
        .map(|(i, _)| i.to_string())
        .collect();
    if hits.is_empty() {
        "1: No".into()
    } else {
        format!("1: Yes, 2: [{}]", hits.join(","))
    }
}

struct Knowledge {
    tasks: Vec<String>,
    objects: Vec<String>,
}

fn parse_knowledge(text: &str) -> Knowledge {
    let mut k = Knowledge { tasks: Vec::new(), objects: Vec::new() };
    let mut section = 0;
    for line in text.lines() {
        let l = line.trim();
        if l.starts_with("Task patterns:") {
            section = 1;
        } else if l.starts_with("Object patterns:") {
            section = 2;
        } else if let Some((_, body)) = numbered_line_items(l).into_iter().next() {
            match section {
                1 => k.tasks.push(body),
                2 => k.objects.push(body),
                _ => {}
            }
        }
    }
    k
}

fn plan(p: &Placeholders) -> String {
    let instruction = get(p, "instruction");
    let knowledge = parse_knowledge(get(p, "pattern_knowledge"));
    let query = content_tokens(instruction);
    let mut best: Option<(f64, &String)> = None;
    for t in &knowledge.tasks {
        let Some((head, _)) = t.split_once(':') else { continue };
        let score = jaccard(&query, &content_tokens(head));
        if score >= 0.5 && best.is_none_or(|(b, _)| score > b) {
            best = Some((score, t));
        }
    }
    if let Some((_, t)) = best {
        let steps: Vec<String> = t.split_once(':').unwrap().1.split(';').map(trim_item).filter(|s| !s.is_empty()).collect();
        if !steps.is_empty() {
            return numbered_inline(&steps);
        }
    }
    let graph = graph_of(p, "scene_graph");
    let steps = naive_plan(instruction, &graph);
    if steps.is_empty() {
        return CANNOT.into();
    }
    let text: Vec<String> = steps.iter().map(|s| s.describe(&graph)).collect();
    numbered_inline(&text)
}

fn clause_split_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*(?:,|\band then\b|\band\b|\bthen\b)\s*").unwrap())
}

/// Clause-by-clause plan for instructions with no matching task pattern.
fn naive_plan(instruction: &str, graph: &SceneGraph) -> Vec<ActionStep> {
    let lowered = instruction.to_lowercase();
    let lowered = lowered.trim().trim_end_matches('.');
    let lowered = lowered.strip_prefix("please ").unwrap_or(lowered);
    let mut world = World::from_graph(graph).ok();
    let mut out: Vec<ActionStep> = Vec::new();
    let mut prev: Option<RawAction> = None;
    let mut last_container: Option<String> = None;
    for clause in clause_split_re().split(lowered).filter(|c| !c.trim().is_empty()) {
        let raw = parse_sentence(clause).or_else(|| {
            let prefix = match prev.as_ref()?.verb {
                Verb::Give => "give me",
                Verb::Pick => "pick up",
                _ => "put",
            };
            parse_sentence(&format!("{prefix} {clause}"))
        });
        let Some(raw) = raw else { continue };
        let resolve = |phrase: &str| -> Option<String> {
            if matches!(phrase, "it" | "them") {
                return last_container.clone();
            }
            resolve_object(graph, phrase).ok()
        };
        let mut steps = Vec::new();
        match raw.verb {
            Verb::PlaceIn | Verb::PlaceOn => {
                let (Some(obj), Some(dest)) = (resolve(&raw.object), raw.destination.as_deref().and_then(resolve)) else {
                    continue;
                };
                let mut opened = Vec::new();
                if let Some(src) = closed_source(world.as_ref(), &obj) {
                    steps.push(ActionStep::open(&src));
                    opened.push(src);
                }
                if raw.verb == Verb::PlaceIn {
                    if world.as_ref().and_then(|w| w.container_state(&dest)) == Some(ContainerState::Closed)
                        && !opened.contains(&dest)
                    {
                        steps.push(ActionStep::open(&dest));
                        opened.push(dest.clone());
                    }
                    steps.push(ActionStep::pick(&obj));
                    steps.push(ActionStep::place_in(&obj, &dest));
                    last_container = Some(dest.clone());
                } else {
                    steps.push(ActionStep::pick(&obj));
                    steps.push(ActionStep::place_on(&obj, &dest));
                }
                for c in opened.iter().rev() {
                    steps.push(ActionStep::close(c));
                }
            }
            Verb::Give => {
                let Some(obj) = resolve(&raw.object) else { continue };
                let surface = world.as_ref().and_then(|w| w.surfaces().keys().next().cloned());
                match (closed_source(world.as_ref(), &obj), surface) {
                    (Some(src), Some(table)) => steps.extend([
                        ActionStep::open(&src),
                        ActionStep::pick(&obj),
                        ActionStep::place_on(&obj, &table),
                        ActionStep::close(&src),
                        ActionStep::pick(&obj),
                        ActionStep::give(&obj),
                    ]),
                    _ => steps.extend([ActionStep::pick(&obj), ActionStep::give(&obj)]),
                }
            }
            Verb::Open | Verb::Close => {
                let Some(c) = resolve(&raw.object) else { continue };
                let want = if raw.verb == Verb::Open { ContainerState::Open } else { ContainerState::Closed };
                let state = world.as_ref().and_then(|w| w.container_state(&c));
                if state.is_none_or(|s| s != want) {
                    steps.push(ActionStep::new(raw.verb, vec![c.clone()]).unwrap());
                }
                last_container = Some(c);
            }
            Verb::Pick => {
                let Some(obj) = resolve(&raw.object) else { continue };
                steps.push(ActionStep::pick(&obj));
            }
        }
        if let Some(w) = world.as_mut() {
            for s in &steps {
                if w.apply(s, &FaultConfig::none()).is_err() {
                    break;
                }
            }
        }
        out.extend(steps);
        prev = Some(raw);
    }
    out
}

fn closed_source(world: Option<&World>, obj: &str) -> Option<String> {
    let w = world?;
    match w.location_of(obj)? {
        Location::InContainer(c) if w.container_state(c) == Some(ContainerState::Closed) => Some(c.clone()),
        _ => None,
    }
}

fn placement_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)the ([a-z ]+?) tends to be placed in the ([a-z ]+)").unwrap())
}

fn consistency(p: &Placeholders) -> String {
    let knowledge = parse_knowledge(get(p, "pattern_knowledge"));
    let mut placements: Vec<(String, String)> = Vec::new();
    for o in &knowledge.objects {
        for c in placement_re().captures_iter(o) {
            placements.push((c[1].to_lowercase(), c[2].trim().to_lowercase()));
        }
    }
    let Ok(actions) = parse_action_list(get(p, "planned_actions")) else { return "1. Yes.".into() };
    for a in actions {
        let Some(raw) = parse_sentence(&a) else { continue };
        let (Verb::PlaceIn, Some(dest)) = (raw.verb, raw.destination.as_deref()) else { continue };
        let known: Vec<&String> = placements.iter().filter(|(o, _)| *o == raw.object).map(|(_, d)| d).collect();
        if let Some(expected) = known.first() {
            if !known.iter().any(|d| d.as_str() == dest) {
                return format!("1. No. 2. The {} should be in the {expected}, not in the {dest}.", raw.object);
            }
        }
    }
    "1. Yes.".into()
}

fn resolved_plan(p: &Placeholders, graph: &SceneGraph) -> Option<Vec<ActionStep>> {
    let actions = parse_action_list(get(p, "planned_actions")).ok()?;
    actions.iter().map(|a| parse_step(a, graph).ok()).collect()
}

fn precondition(p: &Placeholders) -> String {
    let graph = graph_of(p, "scene_graph");
    let fallback = format!("1. {} 2. Yes.", serialize_compact(&graph));
    let (Ok(world), Some(plan)) = (World::from_graph(&graph), resolved_plan(p, &graph)) else { return fallback };
    let v = validate_world(&world, &plan, &graph);
    let graphs: Vec<String> = v.graphs.iter().map(serialize_compact).collect();
    match v.violation {
        None => format!("1. {} 2. Yes.", graphs.join(" || ")),
        Some(viol) => format!("1. {} 2. No. 3. {}", graphs.join(" || "), viol.explanation),
    }
}

fn is_valid(world: &World, plan: &[ActionStep], graph: &SceneGraph) -> bool {
    validate_world(world, plan, graph).is_valid()
}

/// Smallest repair: move one step, else insert one missing `open`.
fn repair(world: &World, plan: &[ActionStep], graph: &SceneGraph) -> Option<Vec<ActionStep>> {
    let n = plan.len();
    let mut moves: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    moves.sort_by_key(|&(i, j)| (i.abs_diff(j), i, j));
    for (i, j) in moves {
        let mut candidate = plan.to_vec();
        let step = candidate.remove(i);
        candidate.insert(j, step);
        if is_valid(world, &candidate, graph) {
            return Some(candidate);
        }
    }
    let v = validate_world(world, plan, graph);
    let viol = v.violation?;
    let mut w = world.clone();
    w.rollout(&plan[..viol.step_index]).ok()?;
    let step = &plan[viol.step_index];
    let closed = match step.verb() {
        Verb::Pick => match w.location_of(step.target()) {
            Some(Location::InContainer(c)) => Some(c.clone()),
            _ => None,
        },
        Verb::PlaceIn => step.destination().map(str::to_string),
        _ => None,
    }?;
    (0..=viol.step_index).find_map(|k| {
        let mut candidate = plan.to_vec();
        candidate.insert(k, ActionStep::open(&closed));
        is_valid(world, &candidate, graph).then_some(candidate)
    })
}

fn should_be_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)the ([a-z ]+?) should be in the ([a-z ]+?), not in the ([a-z ]+)").unwrap())
}

fn revise(p: &Placeholders) -> String {
    let graph = graph_of(p, "scene_graph");
    let original = get(p, "planned_actions").to_string();
    let (Ok(world), Some(mut plan)) = (World::from_graph(&graph), resolved_plan(p, &graph)) else { return original };
    for c in should_be_re().captures_iter(get(p, "failure_explanation")) {
        let (Ok(obj), Ok(want), Ok(wrong)) =
            (resolve_object(&graph, &c[1]), resolve_object(&graph, &c[2]), resolve_object(&graph, c[3].trim()))
        else {
            continue;
        };
        for s in plan.iter_mut() {
            if s.verb() == Verb::PlaceIn && s.target() == obj && s.destination() == Some(wrong.as_str()) {
                *s = ActionStep::place_in(&obj, &want);
            }
        }
    }
    if !is_valid(&world, &plan, &graph) {
        if let Some(fixed) = repair(&world, &plan, &graph) {
            plan = fixed;
        }
    }
    let text: Vec<String> = plan.iter().map(|s| s.describe(&graph)).collect();
    numbered_inline(&text)
}

fn execution_check(p: &Placeholders) -> String {
    let graph = graph_of(p, "resulting_graph");
    let text = get(p, "executed_action");
    let (Some(raw), Ok(step)) = (parse_sentence(text), parse_step(text, &graph)) else { return "1. Yes.".into() };
    let obj = raw.object.clone();
    let dest = raw.destination.clone().unwrap_or_default();
    let target = step.target();
    let held = graph.edges_from(target).any(|e| e.relation == Relation::Held);
    let zone = graph.nodes().iter().find(|n| n.class_label == HUMAN_ZONE_CLASS).map(|n| n.id.clone());
    let ok = match step.verb() {
        Verb::Pick => held,
        Verb::PlaceIn => graph.has_edge(target, Relation::In, step.destination().unwrap()),
        Verb::PlaceOn => graph.has_edge(target, Relation::On, step.destination().unwrap()),
        Verb::Open => graph.state_of(target) == Some("open"),
        Verb::Close => graph.state_of(target) == Some("closed"),
        Verb::Give => zone.is_some_and(|z| graph.has_edge(target, Relation::In, &z)),
    };
    if ok {
        return "1. Yes.".into();
    }
    let (why, fix): (String, Vec<String>) = match step.verb() {
        Verb::Pick => (format!("Failed to successfully grasp the {obj}"), vec![format!("Pick up the {obj}")]),
        Verb::PlaceIn | Verb::PlaceOn | Verb::Give => {
            let place = match step.verb() {
                Verb::PlaceIn => format!("Put the {obj} in the {dest}"),
                Verb::PlaceOn => format!("Put the {obj} on the {dest}"),
                _ => format!("Hand over the {obj}"),
            };
            let why = match step.verb() {
                Verb::Give => format!("Failed to hand over the {obj}"),
                _ => format!("Failed to place the {obj} {} the {dest}", if step.verb() == Verb::PlaceIn { "in" } else { "on" }),
            };
            let fix = if held { vec![place] } else { vec![format!("Pick up the {obj}"), place] };
            (why, fix)
        }
        Verb::Open => (format!("Failed to open the {obj}"), vec![format!("Open the {obj}")]),
        Verb::Close => (format!("Failed to close the {obj}"), vec![format!("Close the {obj}")]),
    };
    format!("1. No. 2. Explanation: {why}. Correction plan: {}", numbered_inline(&fix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{format_pattern_knowledge, parse_verdict, placeholders};
    use crate::scene_graph::{serialize_text, SceneGraphBuilder};

    fn drawer_scene(held: bool) -> SceneGraph {
        let mut b = SceneGraphBuilder::new()
            .node_with_state("drawer", "drawer", "open")
            .node("chips", "chips")
            .node("hand", "hand")
            .node("table", "table")
            .edge("drawer", Relation::On, "table");
        b = if held { b.edge("chips", Relation::Held, "hand") } else { b.edge("chips", Relation::In, "drawer") };
        b.build().unwrap()
    }

    #[test]
    fn extraction_names_the_action() {
        let p = placeholders([
            ("first_graph", serialize_text(&drawer_scene(true))),
            ("second_graph", serialize_text(&drawer_scene(false))),
            ("reminder", String::new()),
        ]);
        assert_eq!(respond(TemplateId::ActionExtract, &p), "Put chips in the drawer.");
    }

    #[test]
    fn retrieval_by_shared_words() {
        let p = placeholders([
            ("instruction", "Put the cake in the drawer".into()),
            ("previous_tasks", "1. Put cake away\n2. Heat milk\n3. Close the drawer".into()),
        ]);
        assert_eq!(respond(TemplateId::TaskRetrieve, &p), "1: Yes, 2: [1,3]");
        let none = placeholders([("instruction", "Dance".into()), ("previous_tasks", "1. Heat milk".into())]);
        assert_eq!(respond(TemplateId::TaskRetrieve, &none), "1: No");
    }

    #[test]
    fn consistency_flags_wrong_container() {
        let k = format_pattern_knowledge(&[], &[("drink".into(), "The drink tends to be placed in the drawer.".into())]);
        let p = placeholders([
            ("instruction", "Store the drink".into()),
            ("pattern_knowledge", k),
            ("planned_actions", "1. Pick up the drink; 2. Put the drink in the basket.".into()),
        ]);
        assert_eq!(
            respond(TemplateId::PlanConsistency, &p),
            "1. No. 2. The drink should be in the drawer, not in the basket."
        );
    }

    #[test]
    fn failed_grasp_verdict() {
        let p = placeholders([
            ("exemplars", NONE_SENTINEL.into()),
            ("executed_action", "Pick up the chips".into()),
            ("resulting_graph", serialize_text(&drawer_scene(false))),
        ]);
        let v = parse_verdict(&respond(TemplateId::ExecutionCheck, &p)).unwrap();
        assert!(!v.success);
        assert_eq!(v.explanation, "Failed to successfully grasp the chips");
        assert_eq!(v.correction.unwrap(), ["Pick up the chips"]);
    }

    #[test]
    fn revision_moves_the_close_after_the_place() {
        let g = SceneGraphBuilder::new()
            .node_with_state("drawer", "drawer", "closed")
            .node("drink", "drink")
            .node("hand", "hand")
            .node("table", "table")
            .edge("drawer", Relation::On, "table")
            .edge("drink", Relation::In, "drawer")
            .build()
            .unwrap();
        let p = placeholders([
            ("instruction", "Take the drink out of the drawer".into()),
            ("scene_graph", serialize_text(&g)),
            (
                "planned_actions",
                "1. Open the drawer; 2. Pick up the drink; 3. Close the drawer; 4. Put the drink on the table.".into(),
            ),
            ("failure_explanation", "The robot should first place the drink and then close the drawer.".into()),
        ]);
        assert_eq!(
            respond(TemplateId::PlanRevise, &p),
            "1. Open the drawer; 2. Pick up the drink; 3. Put the drink on the table; 4. Close the drawer."
        );
    }
}
