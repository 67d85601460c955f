//! Recording → hierarchical knowledge: observation graphs, keyframes,
//! action records and task/object patterns.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_step, ActionStep};
use crate::llm_gateway::{
    numbered_action_graphs, parse_patterns, parse_single_action, placeholders, Gateway, GatewayError, TemplateId,
    UnparseableResponse, NONE_SENTINEL,
};
use crate::scene_graph::{
    compute_relations, graphs_equal, serialize_compact, serialize_text, FrameObservation, GeometryParams, Recording,
    SceneGraph, SceneGraphError,
};

/// Re-asks after an unparseable answer, each with a format reminder.
pub const REASKS: usize = 2;

const ACTION_REMINDER: &str = "\nAnswer with exactly one imperative sentence naming the action and its objects.";
const PATTERN_REMINDER: &str = "\nFollow the answer form exactly: \"1. <task>. 2. <sentences>.\"";

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("recording has no frames")]
    EmptyRecording,
    #[error("downsampling scale must be positive")]
    NonPositiveScale,
    #[error("no scene graphs to select keyframes from")]
    EmptyInput,
    #[error("need at least two keyframes, got {0}")]
    TooFewKeyframes(usize),
    #[error("no action records to summarize")]
    NoRecords,
    #[error(transparent)]
    Geometry(#[from] SceneGraphError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Unparseable(#[from] UnparseableResponse),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    pub index: usize,
    pub description: String,
    pub step: Option<ActionStep>,
    pub preceding_graph: SceneGraph,
    pub resulting_graph: SceneGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPattern {
    pub text: String,
}

/// Either a summary sentence (objects handled more than once) or the graph
/// snippet of the single action that touched the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPattern {
    pub object_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_snippet: Option<SceneGraph>,
}

impl ObjectPattern {
    pub fn text(object_class: &str, text: &str) -> Self {
        ObjectPattern { object_class: object_class.into(), text: Some(text.into()), graph_snippet: None }
    }

    pub fn snippet(object_class: &str, graph: SceneGraph) -> Self {
        ObjectPattern { object_class: object_class.into(), text: None, graph_snippet: Some(graph) }
    }

    /// How the pattern appears in prompts.
    pub fn render(&self) -> String {
        match (&self.text, &self.graph_snippet) {
            (Some(t), _) => t.clone(),
            (None, Some(g)) => serialize_compact(g),
            (None, None) => String::new(),
        }
    }
}

/// Keep frames 0, d, 2d, ...; the output has `ceil(T / d)` frames.
pub fn downsample(frames: &[FrameObservation], d: usize) -> Result<Vec<FrameObservation>, DistillError> {
    if d == 0 {
        return Err(DistillError::NonPositiveScale);
    }
    if frames.is_empty() {
        return Err(DistillError::EmptyRecording);
    }
    Ok(frames.iter().step_by(d).cloned().collect())
}

pub fn build_graphs(frames: &[FrameObservation], params: &GeometryParams) -> Result<Vec<SceneGraph>, DistillError> {
    frames
        .par_iter()
        .map(|f| compute_relations(f, params).map_err(DistillError::from))
        .collect()
}

/// Frame 0 plus every frame whose graph differs from its predecessor.
pub fn select_keyframes(graphs: &[SceneGraph]) -> Result<Vec<(usize, SceneGraph)>, DistillError> {
    let first = graphs.first().ok_or(DistillError::EmptyInput)?;
    let mut out = vec![(0, first.clone())];
    for (t, pair) in graphs.windows(2).enumerate() {
        if !graphs_equal(&pair[0], &pair[1]) {
            out.push((t + 1, pair[1].clone()));
        }
    }
    Ok(out)
}

fn ask_with_reminder<T>(
    gateway: &Gateway,
    template: TemplateId,
    mut values: crate::llm_gateway::Placeholders,
    reminder: &str,
    parse: impl Fn(&str) -> Result<T, UnparseableResponse>,
) -> Result<T, DistillError> {
    values.insert("reminder".into(), String::new());
    let mut last = None;
    for attempt in 0..=REASKS {
        if attempt > 0 {
            values.insert("reminder".into(), reminder.to_string());
        }
        let text = gateway.complete(template, values.clone())?;
        match parse(&text) {
            Ok(v) => return Ok(v),
            Err(e) => {
                tracing::warn!(%template, attempt, "unparseable answer");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt").into())
}

fn extract_one(index: usize, before: &SceneGraph, after: &SceneGraph, gateway: &Gateway) -> Result<ActionRecord, DistillError> {
    let values = placeholders([("first_graph", serialize_text(before)), ("second_graph", serialize_text(after))]);
    let description = ask_with_reminder(gateway, TemplateId::ActionExtract, values, ACTION_REMINDER, parse_single_action)?;
    let step = parse_step(&description, before)
        .or_else(|_| parse_step(&description, after))
        .ok()
        .filter(|s| s.ids().iter().all(|id| before.contains_node(id) && after.contains_node(id)));
    let relevant: BTreeSet<String> = match &step {
        Some(s) => s.ids(),
        None => before.changed_ids(after),
    };
    let keep = |g: &SceneGraph| -> Result<SceneGraph, SceneGraphError> {
        let ids: BTreeSet<String> = relevant.iter().filter(|id| g.contains_node(id)).cloned().collect();
        g.prune(&ids)
    };
    Ok(ActionRecord {
        index,
        description,
        step,
        preceding_graph: keep(before)?,
        resulting_graph: keep(after)?,
    })
}

/// One record per consecutive keyframe pair, extracted concurrently and
/// returned in index order.
pub fn extract_actions(keyframes: &[SceneGraph], gateway: &Gateway) -> Result<Vec<ActionRecord>, DistillError> {
    if keyframes.len() < 2 {
        return Err(DistillError::TooFewKeyframes(keyframes.len()));
    }
    (0..keyframes.len() - 1)
        .into_par_iter()
        .map(|i| extract_one(i, &keyframes[i], &keyframes[i + 1], gateway))
        .collect()
}

fn word_position(sentence: &str, class: &str) -> Option<usize> {
    let words: Vec<String> = sentence
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect();
    let class_words: Vec<&str> = class.split_whitespace().collect();
    let n = class_words.len();
    if n == 0 || n > words.len() {
        return None;
    }
    (0..=words.len() - n).find(|&i| {
        words[i..i + n - 1].iter().zip(&class_words).all(|(w, c)| w == c) && {
            let last = &words[i + n - 1];
            let c = class_words[n - 1];
            last == c || *last == format!("{c}s") || *last == format!("{c}es")
        }
    })
}

fn sentences(text: &str) -> Vec<String> {
    text.split_inclusive(". ")
        .map(|s| s.trim().trim_end_matches('.').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Task pattern plus one object pattern per action-relevant class.
pub fn distill_patterns(
    records: &[ActionRecord],
    initial: &SceneGraph,
    instruction: &str,
    gateway: &Gateway,
) -> Result<(TaskPattern, Vec<ObjectPattern>), DistillError> {
    if records.is_empty() {
        return Err(DistillError::NoRecords);
    }
    let mut order: Vec<String> = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut last_touch: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (ri, r) in records.iter().enumerate() {
        let Some(step) = &r.step else { continue };
        for id in step.args() {
            let Some(class) = r.preceding_graph.class_of(id).or_else(|| initial.class_of(id)) else { continue };
            if !counts.contains_key(class) {
                order.push(class.to_string());
            }
            *counts.entry(class.to_string()).or_default() += 1;
            last_touch.insert(class.to_string(), (ri, id.clone()));
        }
    }
    let multi: Vec<&String> = order.iter().filter(|c| counts[*c] >= 2).collect();
    let actions: Vec<(String, String)> =
        records.iter().map(|r| (r.description.clone(), serialize_compact(&r.resulting_graph))).collect();
    let objects = if multi.is_empty() {
        NONE_SENTINEL.to_string()
    } else {
        multi.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
    };
    let values = placeholders([
        ("instruction", instruction.to_string()),
        ("initial_graph", serialize_text(initial)),
        ("actions", numbered_action_graphs(&actions)),
        ("objects", objects),
    ]);
    let (task, object_text) = ask_with_reminder(gateway, TemplateId::PatternDistill, values, PATTERN_REMINDER, parse_patterns)?;

    let mut assigned: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in sentences(&object_text) {
        let owner = multi
            .iter()
            .filter_map(|c| word_position(&s, c).map(|p| (p, std::cmp::Reverse(c.len()), c.as_str())))
            .min();
        if let Some((_, _, c)) = owner {
            assigned.entry(c).or_default().push(s);
        }
    }
    let mut patterns = Vec::new();
    for class in &order {
        match assigned.get(class.as_str()) {
            Some(texts) if counts[class] >= 2 => patterns.push(ObjectPattern::text(class, &texts.join(". "))),
            _ => {
                let (ri, id) = &last_touch[class];
                let g = &records[*ri].resulting_graph;
                let snippet = g.prune(&BTreeSet::from([id.clone()]))?;
                patterns.push(ObjectPattern::snippet(class, snippet));
            }
        }
    }
    Ok((TaskPattern { text: task }, patterns))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillOptions {
    pub downsample: usize,
    pub geometry: GeometryParams,
}

impl Default for DistillOptions {
    fn default() -> Self {
        DistillOptions { downsample: 5, geometry: GeometryParams::default() }
    }
}

/// Everything distilled from one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Distillation {
    pub instruction: String,
    /// Indices into the downsampled sequence.
    pub keyframe_indices: Vec<usize>,
    pub keyframes: Vec<SceneGraph>,
    pub records: Vec<ActionRecord>,
    pub task_pattern: TaskPattern,
    pub object_patterns: Vec<ObjectPattern>,
    /// First downsampled frame; the source of the visual key.
    pub initial_frame: FrameObservation,
}

pub fn distill(recording: &Recording, options: &DistillOptions, gateway: &Gateway) -> Result<Distillation, DistillError> {
    let frames = downsample(&recording.frames, options.downsample)?;
    let graphs = build_graphs(&frames, &options.geometry)?;
    let keyed = select_keyframes(&graphs)?;
    let (keyframe_indices, keyframes): (Vec<usize>, Vec<SceneGraph>) = keyed.into_iter().unzip();
    let records = extract_actions(&keyframes, gateway)?;
    let instruction = recording.instruction.clone().unwrap_or_else(|| "(unspecified)".into());
    let (task_pattern, object_patterns) = distill_patterns(&records, &keyframes[0], &instruction, gateway)?;
    Ok(Distillation {
        instruction,
        keyframe_indices,
        keyframes,
        records,
        task_pattern,
        object_patterns,
        initial_frame: frames[0].clone(),
    })
}
