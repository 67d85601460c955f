//! The action-primitive grammar shared by the distiller, the planner and the
//! simulator.
//!
//! Every step has a canonical text form `verb(arg1[, arg2])` over scene-graph
//! node ids, and a natural-language form ("Put the pen in the right drawer")
//! used in prompts. Natural language is mapped back onto node ids by
//! case-insensitive longest class-label match, disambiguated by spatial
//! qualifier words checked against directional edges.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene_graph::{Relation, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Pick,
    PlaceIn,
    PlaceOn,
    Open,
    Close,
    Give,
}

impl Verb {
    pub const ALL: [Verb; 6] = [Verb::Pick, Verb::PlaceIn, Verb::PlaceOn, Verb::Open, Verb::Close, Verb::Give];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Pick => "pick",
            Verb::PlaceIn => "place_in",
            Verb::PlaceOn => "place_on",
            Verb::Open => "open",
            Verb::Close => "close",
            Verb::Give => "give",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Verb::PlaceIn | Verb::PlaceOn => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.name() == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("`{0}` is not a valid action step")]
    Malformed(String),
    #[error("no recognizable action in `{0}`")]
    NoAction(String),
    #[error("cannot resolve object `{0}` in the scene")]
    Unresolvable(String),
    #[error("object `{0}` is ambiguous in the scene")]
    Ambiguous(String),
}

/// One primitive action over node ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionStep {
    verb: Verb,
    args: Vec<String>,
}

impl ActionStep {
    pub fn new(verb: Verb, args: Vec<String>) -> Result<Self, StepError> {
        if args.len() != verb.arity() || args.iter().any(|a| a.trim().is_empty() || a.contains([',', '(', ')'])) {
            return Err(StepError::Malformed(format!("{}({})", verb.name(), args.join(", "))));
        }
        Ok(ActionStep { verb, args })
    }

    pub fn pick(object: &str) -> Self {
        ActionStep { verb: Verb::Pick, args: vec![object.into()] }
    }

    pub fn place_in(object: &str, container: &str) -> Self {
        ActionStep { verb: Verb::PlaceIn, args: vec![object.into(), container.into()] }
    }

    pub fn place_on(object: &str, surface: &str) -> Self {
        ActionStep { verb: Verb::PlaceOn, args: vec![object.into(), surface.into()] }
    }

    pub fn open(container: &str) -> Self {
        ActionStep { verb: Verb::Open, args: vec![container.into()] }
    }

    pub fn close(container: &str) -> Self {
        ActionStep { verb: Verb::Close, args: vec![container.into()] }
    }

    pub fn give(object: &str) -> Self {
        ActionStep { verb: Verb::Give, args: vec![object.into()] }
    }

    pub fn verb(&self) -> Verb {
        self.verb
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }

    /// The first argument: the manipulated object, or the container for
    /// open/close.
    pub fn target(&self) -> &str {
        &self.args[0]
    }

    /// Second argument of place_in / place_on.
    pub fn destination(&self) -> Option<&str> {
        self.args.get(1).map(String::as_str)
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.args.iter().cloned().collect()
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// Natural-language rendering against a scene graph.
    pub fn describe(&self, graph: &SceneGraph) -> String {
        let name = |id: &str| object_name(graph, id);
        match self.verb {
            Verb::Pick => format!("Pick up the {}", name(&self.args[0])),
            Verb::PlaceIn => format!("Put the {} in the {}", name(&self.args[0]), name(&self.args[1])),
            Verb::PlaceOn => format!("Put the {} on the {}", name(&self.args[0]), name(&self.args[1])),
            Verb::Open => format!("Open the {}", name(&self.args[0])),
            Verb::Close => format!("Close the {}", name(&self.args[0])),
            Verb::Give => format!("Hand over the {}", name(&self.args[0])),
        }
    }
}

impl fmt::Display for ActionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.verb.name(), self.args.join(", "))
    }
}

fn canonical_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([a-z_]+)\(\s*([^,()\s]+)\s*(?:,\s*([^,()\s]+)\s*)?\)\s*\.?\s*$").unwrap())
}

impl FromStr for ActionStep {
    type Err = StepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let caps = canonical_re()
            .captures(s)
            .ok_or_else(|| StepError::Malformed(s.to_string()))?;
        let verb = Verb::from_name(&caps[1]).ok_or_else(|| StepError::Malformed(s.to_string()))?;
        let args = [caps.get(2), caps.get(3)]
            .into_iter()
            .flatten()
            .map(|m| m.as_str().to_string())
            .collect();
        ActionStep::new(verb, args)
    }
}

impl Serialize for ActionStep {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for ActionStep {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Spatial qualifier words and the directional relation each one asserts
/// with respect to same-class peers.
const QUALIFIERS: [(&str, Relation, Relation); 6] = [
    ("left", Relation::LeftOf, Relation::RightOf),
    ("right", Relation::RightOf, Relation::LeftOf),
    ("front", Relation::InFrontOf, Relation::Behind),
    ("back", Relation::Behind, Relation::InFrontOf),
    ("top", Relation::Above, Relation::Below),
    ("bottom", Relation::Below, Relation::Above),
];

fn peers<'a>(graph: &'a SceneGraph, id: &str) -> Vec<&'a str> {
    let Some(class) = graph.class_of(id) else { return Vec::new() };
    graph
        .nodes()
        .iter()
        .filter(|n| n.class_label == class && n.id != id)
        .map(|n| n.id.as_str())
        .collect()
}

fn satisfies_qualifier(graph: &SceneGraph, id: &str, rel: Relation, opposite: Relation) -> bool {
    let peers = peers(graph, id);
    let has = |r: Relation| {
        peers
            .iter()
            .any(|p| graph.has_edge(id, r, p) || r.inverse().is_some_and(|inv| graph.has_edge(p, inv, id)))
    };
    has(rel) && !has(opposite)
}

/// How prompts name an object: its class label, prefixed with a spatial
/// qualifier when another instance of the class is present. Falls back to
/// the instance id when no qualifier singles it out.
pub fn object_name(graph: &SceneGraph, id: &str) -> String {
    let Some(class) = graph.class_of(id) else { return id.replace('_', " ") };
    let peers = peers(graph, id);
    if peers.is_empty() {
        return class.to_string();
    }
    for (word, rel, opposite) in QUALIFIERS {
        if satisfies_qualifier(graph, id, rel, opposite)
            && !peers.iter().any(|p| satisfies_qualifier(graph, p, rel, opposite))
        {
            return format!("{word} {class}");
        }
    }
    id.to_string()
}

/// A parsed but unresolved natural-language action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAction {
    pub verb: Verb,
    pub object: String,
    pub destination: Option<String>,
}

fn sentence_patterns() -> &'static [(Verb, Regex)] {
    static RE: OnceLock<Vec<(Verb, Regex)>> = OnceLock::new();
    RE.get_or_init(|| {
        let r = |p: &str| Regex::new(p).unwrap();
        vec![
            (Verb::Open, r(r"^open (?:up )?(.+?)$")),
            (Verb::Close, r(r"^(?:close|shut) (.+?)$")),
            (Verb::Give, r(r"^hand over (.+?)(?: to .+)?$")),
            (Verb::Give, r(r"^(?:give|hand|pass|bring) (?:me |the human |the user )?(.+?)(?: (?:to|for) (?:me|the human|the user|the person))?$")),
            (
                Verb::PlaceIn,
                r(r"^(?:put|place|move|drop|insert|return|store|stow|set) (.+?) (?:in|into|inside)(?: of)? (.+)$"),
            ),
            (Verb::PlaceOn, r(r"^(?:put|place|move|drop|return|set|lay) (.+?) (?:on top of|onto|on) (.+)$")),
            (Verb::Pick, r(r"^(?:pick up|pick|grasp|grab|take|lift|get|retrieve)(?: up)? (.+?)(?: up)?(?: (?:from|out of|off) .+)?$")),
        ]
    })
}

fn normalize_sentence(text: &str) -> String {
    static NUM: OnceLock<Regex> = OnceLock::new();
    let num = NUM.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[-*•])\s*").unwrap());
    let lowered = text.trim().to_lowercase();
    let stripped = num.replace(&lowered, "");
    let mut s: String = stripped
        .trim()
        .trim_end_matches(['.', ';', '!', ','])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    for prefix in ["please ", "then ", "next, ", "next ", "finally, ", "finally ", "the robot should ", "robot "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.to_string();
        }
    }
    s
}

fn strip_article(phrase: &str) -> String {
    let mut p = phrase.trim();
    for art in ["the ", "a ", "an ", "some ", "my "] {
        if let Some(rest) = p.strip_prefix(art) {
            p = rest;
            break;
        }
    }
    p.trim().to_string()
}

/// Recognize the verb and argument phrases of one sentence.
pub fn parse_sentence(text: &str) -> Option<RawAction> {
    if let Ok(step) = text.trim().parse::<ActionStep>() {
        return Some(RawAction {
            verb: step.verb,
            object: step.args[0].clone(),
            destination: step.args.get(1).cloned(),
        });
    }
    let s = normalize_sentence(text);
    for (verb, re) in sentence_patterns() {
        if let Some(caps) = re.captures(&s) {
            return Some(RawAction {
                verb: *verb,
                object: strip_article(&caps[1]),
                destination: caps.get(2).map(|m| strip_article(m.as_str())),
            });
        }
    }
    None
}

fn contains_words(haystack: &str, needle: &str) -> Option<usize> {
    let h: Vec<&str> = haystack.split_whitespace().collect();
    let n: Vec<&str> = needle.split_whitespace().collect();
    if n.is_empty() || n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()] == n[..])
}

/// Resolve a noun phrase ("the right drawer", "pen", "right_drawer") to a
/// node id of `graph`.
pub fn resolve_object(graph: &SceneGraph, phrase: &str) -> Result<String, StepError> {
    let phrase = strip_article(&phrase.to_lowercase());
    let as_id = phrase.replace(' ', "_");
    if graph.contains_node(&as_id) {
        return Ok(as_id);
    }
    let mut best: Option<&str> = None;
    for node in graph.nodes() {
        let class = node.class_label.to_lowercase();
        let mentioned = contains_words(&phrase, &class).is_some() || contains_words(&phrase, &plural(&class)).is_some();
        if mentioned && best.is_none_or(|b| class.len() > b.len()) {
            best = Some(node.class_label.as_str());
        }
    }
    let Some(class) = best else { return Err(StepError::Unresolvable(phrase)) };
    let candidates: Vec<&str> = graph
        .nodes()
        .iter()
        .filter(|n| n.class_label == class)
        .map(|n| n.id.as_str())
        .collect();
    if candidates.len() == 1 {
        return Ok(candidates[0].to_string());
    }
    let mut narrowed = candidates.clone();
    for (word, rel, opposite) in QUALIFIERS {
        if contains_words(&phrase, word).is_some() {
            narrowed.retain(|id| satisfies_qualifier(graph, id, rel, opposite));
        }
    }
    match narrowed.as_slice() {
        [one] if narrowed.len() < candidates.len() => Ok(one.to_string()),
        _ => Err(StepError::Ambiguous(phrase)),
    }
}

fn plural(word: &str) -> String {
    if word.ends_with('s') || word.ends_with("ch") || word.ends_with("sh") {
        format!("{word}es")
    } else {
        format!("{word}s")
    }
}

/// Parse one sentence and resolve its objects against `graph`.
pub fn parse_step(text: &str, graph: &SceneGraph) -> Result<ActionStep, StepError> {
    let raw = parse_sentence(text).ok_or_else(|| StepError::NoAction(text.trim().to_string()))?;
    resolve_raw(&raw, graph)
}

pub fn resolve_raw(raw: &RawAction, graph: &SceneGraph) -> Result<ActionStep, StepError> {
    let mut args = vec![resolve_object(graph, &raw.object)?];
    if let Some(dest) = &raw.destination {
        args.push(resolve_object(graph, dest)?);
    }
    ActionStep::new(raw.verb, args)
}
