//! Response grammars. Every parser is strict: anything that does not fit
//! the answer shape requested by the template is an [`UnparseableResponse`].

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::TemplateId;
use crate::action::parse_sentence;
use crate::scene_graph::{parse_text, SceneGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unparseable response ({reason}): {text:?}")]
pub struct UnparseableResponse {
    pub reason: String,
    pub text: String,
}

fn unparseable(reason: &str, text: &str) -> UnparseableResponse {
    UnparseableResponse { reason: reason.to_string(), text: text.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub success: bool,
    pub explanation: String,
    pub correction: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionAnswer {
    pub graphs: Vec<SceneGraph>,
    pub compliant: bool,
    pub summary: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedResponse {
    ActionList(Vec<String>),
    YesNoIndices(bool, Vec<usize>),
    Verdict(Verdict),
    GraphSequence(PreconditionAnswer),
    Discrepancy(String),
    Patterns { task: String, objects: String },
}

/// Split on sequential markers `1.`, `2.`, ... (also `1:` and `1)`). A
/// marker counts only at the start or after whitespace, `;` or `,`, and
/// must be followed by whitespace or the end of text.
pub(crate) fn numbered_items(text: &str) -> Vec<String> {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let marker = MARKER.get_or_init(|| Regex::new(r"(?:^|[\s;,])(\d+)\s*[.:)](?:\s|$)").unwrap());
    let mut starts: Vec<(usize, usize)> = Vec::new();
    let mut from = 0;
    let mut k = 1;
    while let Some(caps) = marker.captures_at(text, from) {
        let m = caps.get(0).unwrap();
        let num = caps.get(1).unwrap();
        if num.as_str().parse::<usize>().ok() == Some(k) {
            starts.push((num.start(), m.end()));
            from = m.end();
            k += 1;
        } else {
            from = num.end();
        }
    }
    starts
        .iter()
        .enumerate()
        .map(|(i, &(_, body))| {
            let end = starts.get(i + 1).map_or(text.len(), |n| n.0);
            text[body..end].trim().to_string()
        })
        .collect()
}

pub(crate) fn trim_item(s: &str) -> String {
    s.trim().trim_end_matches(['.', ';', ',']).trim().to_string()
}

/// `1. Open the drawer; 2. Pick up the drink.` → two items.
pub fn parse_action_list(text: &str) -> Result<Vec<String>, UnparseableResponse> {
    let items = numbered_items(text);
    if items.is_empty() {
        return Err(unparseable("no numbered item", text));
    }
    let out: Vec<String> = items
        .iter()
        .flat_map(|item| item.split(';').map(trim_item).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    if out.is_empty() {
        return Err(unparseable("numbered items are empty", text));
    }
    Ok(out)
}

fn yes_no_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap())
}

fn first_yes_no(text: &str) -> Option<bool> {
    yes_no_re().captures(text).map(|c| c[1].eq_ignore_ascii_case("yes"))
}

/// `1: Yes, 2: [1,5]` → `(true, [1, 5])`. A No discards any list.
pub fn parse_yes_no_indices(text: &str) -> Result<(bool, Vec<usize>), UnparseableResponse> {
    static LIST: OnceLock<Regex> = OnceLock::new();
    let list = LIST.get_or_init(|| Regex::new(r"\[\s*(\d+(?:\s*,\s*\d+)*)?\s*\]").unwrap());
    let yes = first_yes_no(text).ok_or_else(|| unparseable("no yes/no token", text))?;
    if !yes {
        return Ok((false, Vec::new()));
    }
    let indices = match list.captures(text) {
        Some(c) => c.get(1).map_or(Vec::new(), |m| {
            m.as_str().split(',').map(|n| n.trim().parse().unwrap()).collect()
        }),
        None => Vec::new(),
    };
    Ok((true, indices))
}

fn split_correction(text: &str) -> (&str, Option<&str>) {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)correction plan\s*:").unwrap());
    match re.find(text) {
        Some(m) => (&text[..m.start()], Some(&text[m.end()..])),
        None => (text, None),
    }
}

/// Execution-check answer: `1. No. 2. Explanation: ... Correction plan: 1. ...`.
pub fn parse_verdict(text: &str) -> Result<Verdict, UnparseableResponse> {
    static EXPL: OnceLock<Regex> = OnceLock::new();
    let expl = EXPL.get_or_init(|| Regex::new(r"(?i)explanation\s*:").unwrap());
    let (head, tail) = split_correction(text);
    let success = first_yes_no(head).ok_or_else(|| unparseable("no yes/no token", text))?;
    if success {
        return Ok(Verdict { success, explanation: String::new(), correction: None });
    }
    let explanation = match expl.find(head) {
        Some(m) => trim_item(&head[m.end()..]),
        None => numbered_items(head).get(1).map(|s| trim_item(s)).unwrap_or_default(),
    };
    if explanation.is_empty() {
        return Err(unparseable("negative verdict without explanation", text));
    }
    let correction = match tail {
        Some(t) => Some(parse_action_list(t)?),
        None => None,
    };
    Ok(Verdict { success, explanation, correction })
}

/// Consistency answer: `1. Yes.` → `None`; `1. No. 2. <summary>` → the summary.
pub fn parse_discrepancy(text: &str) -> Result<Option<String>, UnparseableResponse> {
    let yes = first_yes_no(text).ok_or_else(|| unparseable("no yes/no token", text))?;
    if yes {
        return Ok(None);
    }
    let items = numbered_items(text);
    let summary = items.get(1).map(|s| trim_item(s)).unwrap_or_default();
    if summary.is_empty() {
        return Err(unparseable("negative answer without summary", text));
    }
    Ok(Some(summary))
}

/// Precondition answer: `1. <g> || <g> 2. Yes.` or `... 2. No. 3. <summary>`.
pub fn parse_precondition(text: &str) -> Result<PreconditionAnswer, UnparseableResponse> {
    let items = numbered_items(text);
    if items.len() < 2 {
        return Err(unparseable("expected at least two numbered items", text));
    }
    let mut graphs = Vec::new();
    for chunk in items[0].split("||") {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        graphs.push(parse_text(chunk).map_err(|e| unparseable(&e.to_string(), text))?);
    }
    let compliant = first_yes_no(&items[1]).ok_or_else(|| unparseable("no yes/no token", text))?;
    let summary = items.get(2).map(|s| trim_item(s)).filter(|s| !s.is_empty());
    if !compliant && summary.is_none() {
        return Err(unparseable("negative answer without summary", text));
    }
    Ok(PreconditionAnswer { graphs, compliant, summary })
}

/// Pattern answer: `1. <task>. 2. <object sentences>`.
pub fn parse_patterns(text: &str) -> Result<(String, String), UnparseableResponse> {
    let items = numbered_items(text);
    let task = items.first().map(|s| trim_item(s)).unwrap_or_default();
    if task.is_empty() {
        return Err(unparseable("missing task pattern", text));
    }
    let objects = items.get(1).map(|s| s.trim().to_string()).unwrap_or_default();
    Ok((task, objects))
}

/// Action-extraction answer: one recognizable imperative sentence.
pub fn parse_single_action(text: &str) -> Result<String, UnparseableResponse> {
    let trimmed = text.trim();
    let trimmed = trimmed.strip_prefix("A:").map_or(trimmed, str::trim);
    let candidates = numbered_items(trimmed);
    if candidates.is_empty() && parse_sentence(trimmed).is_some() {
        return Ok(trimmed.to_string());
    }
    let pieces = if candidates.is_empty() {
        trimmed.split_inclusive(['.', '\n']).map(str::to_string).collect()
    } else {
        candidates
    };
    pieces
        .iter()
        .map(|p| p.trim())
        .find(|p| parse_sentence(p).is_some())
        .map(str::to_string)
        .ok_or_else(|| unparseable("no action sentence", text))
}

pub fn parse_response(template: TemplateId, text: &str) -> Result<ParsedResponse, UnparseableResponse> {
    Ok(match template {
        TemplateId::ActionExtract => ParsedResponse::ActionList(vec![parse_single_action(text)?]),
        TemplateId::PatternDistill => {
            let (task, objects) = parse_patterns(text)?;
            ParsedResponse::Patterns { task, objects }
        }
        TemplateId::TaskRetrieve => {
            let (yes, idx) = parse_yes_no_indices(text)?;
            ParsedResponse::YesNoIndices(yes, idx)
        }
        TemplateId::Plan | TemplateId::PlanRevise => ParsedResponse::ActionList(parse_action_list(text)?),
        TemplateId::PlanConsistency => match parse_discrepancy(text)? {
            Some(s) => ParsedResponse::Discrepancy(s),
            None => ParsedResponse::Verdict(Verdict { success: true, explanation: String::new(), correction: None }),
        },
        TemplateId::PlanPrecondition => ParsedResponse::GraphSequence(parse_precondition(text)?),
        TemplateId::ExecutionCheck => ParsedResponse::Verdict(parse_verdict(text)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_lists() {
        let items =
            parse_action_list("1. Open the drawer; 2. Pick up the drink; 3. Put the drink on the table; 4. Close the drawer.")
                .unwrap();
        assert_eq!(items, ["Open the drawer", "Pick up the drink", "Put the drink on the table", "Close the drawer"]);
        assert_eq!(parse_action_list("1. Open the drawer").unwrap(), ["Open the drawer"]);
        assert!(parse_action_list("I cannot help").is_err());
        let multiline = parse_action_list("1. Pick up the pen.\n2. Put the pen in the right drawer.").unwrap();
        assert_eq!(multiline.len(), 2);
    }

    #[test]
    fn yes_no_indices() {
        assert_eq!(parse_yes_no_indices("1: Yes, 2: [1,5]").unwrap(), (true, vec![1, 5]));
        assert_eq!(parse_yes_no_indices("No").unwrap(), (false, vec![]));
        assert_eq!(parse_yes_no_indices("Yes, [2]").unwrap(), (true, vec![2]));
        assert_eq!(parse_yes_no_indices("1: No, 2: [3]").unwrap(), (false, vec![]));
        assert!(parse_yes_no_indices("maybe").is_err());
    }

    #[test]
    fn verdicts() {
        let v = parse_verdict(
            "1. No. 2. Explanation: Failed to successfully grasp the drink. Correction plan: 1. Pick up the drink from the drawer 2. Place the drink on the table.",
        )
        .unwrap();
        assert!(!v.success);
        assert_eq!(v.explanation, "Failed to successfully grasp the drink");
        assert_eq!(
            v.correction.unwrap(),
            ["Pick up the drink from the drawer", "Place the drink on the table"]
        );
        assert_eq!(
            parse_verdict("1. Yes.").unwrap(),
            Verdict { success: true, explanation: String::new(), correction: None }
        );
        assert!(parse_verdict("1. No.").is_err());
    }

    #[test]
    fn discrepancies_and_patterns() {
        assert_eq!(parse_discrepancy("1. Yes.").unwrap(), None);
        assert_eq!(
            parse_discrepancy("1. No. 2. The drink should be in the drawer, not in the basket.").unwrap().unwrap(),
            "The drink should be in the drawer, not in the basket"
        );
        let (task, objects) = parse_patterns(
            "1. Repositioning each object on the table to its original location. 2. The drawer on the table tends to contain snacks.",
        )
        .unwrap();
        assert_eq!(task, "Repositioning each object on the table to its original location");
        assert_eq!(objects, "The drawer on the table tends to contain snacks.");
    }

    #[test]
    fn precondition_answers() {
        let g = "Objects and states: drawer [open], pen | Inter-object relations: pen is in drawer | Human-object relations: ";
        let a = parse_precondition(&format!("1. {g} || {g} 2. No. 3. The robot should first open the drawer.")).unwrap();
        assert_eq!(a.graphs.len(), 2);
        assert!(!a.compliant);
        assert_eq!(a.summary.as_deref(), Some("The robot should first open the drawer"));
        assert!(parse_precondition(&format!("1. {g} 2. No.")).is_err());
        assert!(parse_precondition(&format!("1. {g} 2. Yes.")).unwrap().compliant);
    }

    #[test]
    fn single_actions() {
        assert_eq!(parse_single_action("Put chips in the drawer.").unwrap(), "Put chips in the drawer.");
        assert_eq!(parse_single_action("A: 1. Open the drawer.").unwrap(), "Open the drawer.");
        assert!(parse_single_action("The scene looks nice.").is_err());
    }
}
