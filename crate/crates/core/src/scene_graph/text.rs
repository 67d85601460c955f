//! Three-line text form used inside every prompt, and its inverse.
//!
//! ```text
//! Objects and states: drawer [open], pen, right_drawer (drawer) [closed]
//! Inter-object relations: pen is in drawer
//! Human-object relations: chips is held by hand
//! ```
//!
//! Objects are written by instance id; the class label follows in
//! parentheses only when it differs from the id, so the form is lossless.

use std::sync::OnceLock;

use regex::Regex;

use super::{Relation, RelationEdge, SceneGraph, SceneGraphError, SceneNode};

pub const OBJECTS_HEADER: &str = "Objects and states: ";
pub const INTER_HEADER: &str = "Inter-object relations: ";
pub const HUMAN_HEADER: &str = "Human-object relations: ";

fn render_node(n: &SceneNode) -> String {
    let mut s = n.id.clone();
    if n.class_label != n.id {
        s.push_str(&format!(" ({})", n.class_label));
    }
    if let Some(state) = &n.state {
        s.push_str(&format!(" [{state}]"));
    }
    s
}

fn objects_line(g: &SceneGraph) -> String {
    let body: Vec<String> = g.nodes().iter().map(render_node).collect();
    format!("{OBJECTS_HEADER}{}", body.join(", "))
}

fn involves_hand(g: &SceneGraph, e: &RelationEdge) -> bool {
    [&e.subject, &e.object]
        .iter()
        .any(|id| g.node(id).is_some_and(|n| n.is_hand()))
}

pub fn serialize_text(g: &SceneGraph) -> String {
    let (human, inter): (Vec<&RelationEdge>, Vec<&RelationEdge>) =
        g.edges().iter().partition(|e| involves_hand(g, e));
    let join = |edges: Vec<&RelationEdge>| {
        edges.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
    };
    format!(
        "{}\n{INTER_HEADER}{}\n{HUMAN_HEADER}{}",
        objects_line(g),
        join(inter),
        join(human)
    )
}

/// Objects and states only; used when scene-graph relations are ablated.
pub fn serialize_objects_only(g: &SceneGraph) -> String {
    objects_line(g)
}

/// Single-line variant for embedding graph snippets in bullet lists.
pub fn serialize_compact(g: &SceneGraph) -> String {
    serialize_text(g).replace('\n', " | ")
}

fn node_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([^\s,()\[\]|]+)(?: \(([^,()\[\]|]+)\))?(?: \[([^,\[\]|]+)\])?$").unwrap()
    })
}

fn clause_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\S+) is (.+) (\S+)$").unwrap())
}

fn parse_err(msg: impl Into<String>) -> SceneGraphError {
    SceneGraphError::Parse(msg.into())
}

fn split_body(body: &str) -> Vec<&str> {
    if body.trim().is_empty() {
        Vec::new()
    } else {
        body.split(", ").map(str::trim).collect()
    }
}

fn strip_header<'a>(line: &'a str, header: &str) -> Result<&'a str, SceneGraphError> {
    let trimmed = header.trim_end();
    line.strip_prefix(header)
        .or_else(|| (line.trim_end() == trimmed).then_some(""))
        .ok_or_else(|| parse_err(format!("expected line starting with `{trimmed}`, got `{line}`")))
}

/// Inverse of [`serialize_text`]. Also accepts the objects-only form and the
/// compact ` | `-joined form.
pub fn parse_text(text: &str) -> Result<SceneGraph, SceneGraphError> {
    let normalized = text.trim().replace(" | ", "\n");
    let lines: Vec<&str> = normalized.lines().map(|l| l.trim_end_matches('\r')).collect();
    if lines.is_empty() || lines.len() > 3 {
        return Err(parse_err(format!("expected 1 to 3 lines, got {}", lines.len())));
    }
    let mut nodes = Vec::new();
    for item in split_body(strip_header(lines[0], OBJECTS_HEADER)?) {
        let caps = node_re()
            .captures(item)
            .ok_or_else(|| parse_err(format!("bad object entry `{item}`")))?;
        let id = caps[1].to_string();
        let class_label = caps.get(2).map_or_else(|| id.clone(), |m| m.as_str().to_string());
        nodes.push(SceneNode {
            id,
            class_label,
            state: caps.get(3).map(|m| m.as_str().to_string()),
        });
    }
    let mut edges = Vec::new();
    for (idx, header) in [(1, INTER_HEADER), (2, HUMAN_HEADER)] {
        let Some(line) = lines.get(idx) else { continue };
        for clause in split_body(strip_header(line, header)?) {
            let caps = clause_re()
                .captures(clause)
                .ok_or_else(|| parse_err(format!("bad relation clause `{clause}`")))?;
            let relation = Relation::from_phrase(&caps[2])
                .ok_or_else(|| parse_err(format!("unknown relation `{}`", &caps[2])))?;
            edges.push(RelationEdge::new(&caps[1], relation, &caps[3]));
        }
    }
    SceneGraph::new(nodes, edges)
}
