//! Chat-completion access behind a small trait, the prompt-template
//! registry, and the response grammars.
//!
//! Backends:
//! - [`ScriptedClient`]: canned responses keyed by placeholder digest, with a
//!   rule-based responder as fallback. Pure and offline.
//! - [`ReplayClient`]: answers from a JSON-lines log written by
//!   [`RecordingClient`].
//! - [`LiveClient`]: OpenAI-compatible HTTP endpoint.

mod live;
mod parse;
mod replay;
mod scripted;
pub mod symbolic;

pub use live::{LiveClient, LiveConfig};
pub use parse::{
    parse_action_list, parse_discrepancy, parse_patterns, parse_precondition, parse_response, parse_single_action, parse_verdict,
    parse_yes_no_indices, ParsedResponse, PreconditionAnswer, UnparseableResponse, Verdict,
};
pub use replay::{LogRecord, RecordingClient, ReplayClient};
pub use scripted::{placeholder_digest, Fallback, Script, ScriptEntry, ScriptRule, ScriptedClient, WhenClause};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Placeholders = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ActionExtract,
    PatternDistill,
    TaskRetrieve,
    Plan,
    PlanConsistency,
    PlanPrecondition,
    PlanRevise,
    ExecutionCheck,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::ActionExtract,
        TemplateId::PatternDistill,
        TemplateId::TaskRetrieve,
        TemplateId::Plan,
        TemplateId::PlanConsistency,
        TemplateId::PlanPrecondition,
        TemplateId::PlanRevise,
        TemplateId::ExecutionCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::ActionExtract => "action_extract",
            TemplateId::PatternDistill => "pattern_distill",
            TemplateId::TaskRetrieve => "task_retrieve",
            TemplateId::Plan => "plan",
            TemplateId::PlanConsistency => "plan_consistency",
            TemplateId::PlanPrecondition => "plan_precondition",
            TemplateId::PlanRevise => "plan_revise",
            TemplateId::ExecutionCheck => "execution_check",
        }
    }

    fn bundled_body(self) -> &'static str {
        match self {
            TemplateId::ActionExtract => include_str!("../../templates/action_extract.txt"),
            TemplateId::PatternDistill => include_str!("../../templates/pattern_distill.txt"),
            TemplateId::TaskRetrieve => include_str!("../../templates/task_retrieve.txt"),
            TemplateId::Plan => include_str!("../../templates/plan.txt"),
            TemplateId::PlanConsistency => include_str!("../../templates/plan_consistency.txt"),
            TemplateId::PlanPrecondition => include_str!("../../templates/plan_precondition.txt"),
            TemplateId::PlanRevise => include_str!("../../templates/plan_revise.txt"),
            TemplateId::ExecutionCheck => include_str!("../../templates/execution_check.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GatewayError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("template `{template}` needs placeholder `{name}`")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("no scripted response for {template} (digest {digest})")]
    NoScriptedResponse { template: TemplateId, digest: String },
    #[error("replay log has no remaining response for {template}")]
    ReplayExhausted { template: TemplateId },
    #[error("gateway call budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("missing API key in DIGKNOW_API_KEY")]
    MissingApiKey,
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 0.0, max_tokens: 1024 }
    }
}

/// One rendered call. Backends may key on the structured placeholders
/// (scripted) or on the final prompt text (replay, live).
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template: TemplateId,
    pub placeholders: Placeholders,
    pub prompt: String,
    pub params: DecodingParams,
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

impl<T: ChatClient + ?Sized> ChatClient for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRegistry {
    bodies: BTreeMap<TemplateId, String>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        PromptRegistry::bundled()
    }
}

impl PromptRegistry {
    pub fn bundled() -> Self {
        let bodies = TemplateId::ALL.into_iter().map(|t| (t, t.bundled_body().to_string())).collect();
        PromptRegistry { bodies }
    }

    /// Bundled templates, overridden by any `<template_id>.txt` in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, GatewayError> {
        let mut reg = PromptRegistry::bundled();
        for t in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", t.as_str()));
            if path.exists() {
                reg.bodies.insert(t, std::fs::read_to_string(path)?);
            }
        }
        Ok(reg)
    }

    pub fn body(&self, template: TemplateId) -> &str {
        &self.bodies[&template]
    }

    /// Placeholder names used by a template, in order of first use.
    pub fn placeholders(&self, template: TemplateId) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for caps in placeholder_re().captures_iter(self.body(template)) {
            if !out.iter().any(|n| n == &caps[1]) {
                out.push(caps[1].to_string());
            }
        }
        out
    }

    pub fn render(&self, template: TemplateId, values: &Placeholders) -> Result<String, GatewayError> {
        let body = self.body(template);
        if let Some(caps) = placeholder_re().captures_iter(body).find(|c| !values.contains_key(&c[1])) {
            return Err(GatewayError::MissingPlaceholder { template, name: caps[1].to_string() });
        }
        let rendered = placeholder_re().replace_all(body, |caps: &regex::Captures| values[&caps[1]].clone());
        Ok(rendered.trim_end().to_string())
    }
}

pub fn render(template: TemplateId, values: &Placeholders) -> Result<String, GatewayError> {
    static REG: OnceLock<PromptRegistry> = OnceLock::new();
    REG.get_or_init(PromptRegistry::bundled).render(template, values)
}

/// `1. a\n2. b`; the 1-based numbering used in every prompt list.
pub fn numbered_lines<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `1. a; 2. b.`; inline numbering used for action lists.
pub fn numbered_inline<S: AsRef<str>>(items: &[S]) -> String {
    let body = items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("; ");
    if body.is_empty() {
        body
    } else {
        format!("{body}.")
    }
}

/// Sentinel for an empty knowledge section.
pub const NONE_SENTINEL: &str = "(none)";

/// `1. <action>; <compact graph>. 2. ...`, or the sentinel when empty.
pub fn numbered_action_graphs(pairs: &[(String, String)]) -> String {
    if pairs.is_empty() {
        return NONE_SENTINEL.to_string();
    }
    pairs
        .iter()
        .enumerate()
        .map(|(i, (action, graph))| format!("{}. {}; {}.", i + 1, action.trim().trim_end_matches('.'), graph))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The pattern-knowledge block of the planning prompts.
pub fn format_pattern_knowledge(task_patterns: &[String], object_patterns: &[(String, String)]) -> String {
    if task_patterns.is_empty() && object_patterns.is_empty() {
        return NONE_SENTINEL.to_string();
    }
    let tasks = if task_patterns.is_empty() { NONE_SENTINEL.to_string() } else { numbered_lines(task_patterns) };
    let objects: Vec<String> = object_patterns.iter().map(|(c, t)| format!("{c}: {t}")).collect();
    let objects = if objects.is_empty() { NONE_SENTINEL.to_string() } else { numbered_lines(&objects) };
    format!("\nTask patterns:\n{tasks}\nObject patterns:\n{objects}")
}

/// A client plus a template registry and a per-episode call counter.
#[derive(Clone)]
pub struct Gateway {
    client: Arc<dyn ChatClient>,
    registry: Arc<PromptRegistry>,
    params: DecodingParams,
    calls: Arc<AtomicUsize>,
    budget: Option<usize>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("calls", &self.calls())
            .field("budget", &self.budget)
            .finish()
    }
}

impl Gateway {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Gateway {
            client,
            registry: Arc::new(PromptRegistry::bundled()),
            params: DecodingParams::default(),
            calls: Arc::new(AtomicUsize::new(0)),
            budget: None,
        }
    }

    pub fn with_registry(mut self, registry: PromptRegistry) -> Self {
        self.registry = Arc::new(registry);
        self
    }

    pub fn with_params(mut self, params: DecodingParams) -> Self {
        self.params = params;
        self
    }

    /// Same client and templates, fresh counter and an optional hard cap.
    pub fn fork(&self, budget: Option<usize>) -> Gateway {
        Gateway {
            client: Arc::clone(&self.client),
            registry: Arc::clone(&self.registry),
            params: self.params,
            calls: Arc::new(AtomicUsize::new(0)),
            budget,
        }
    }

    /// Same counter, different cap.
    pub fn with_budget(&self, budget: Option<usize>) -> Gateway {
        Gateway { budget, ..self.clone() }
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn registry(&self) -> &PromptRegistry {
        &self.registry
    }

    pub fn complete(&self, template: TemplateId, placeholders: Placeholders) -> Result<String, GatewayError> {
        let prompt = self.registry.render(template, &placeholders)?;
        let prev = self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(b) = self.budget {
            if prev >= b {
                self.calls.fetch_sub(1, Ordering::SeqCst);
                return Err(GatewayError::BudgetExhausted(b));
            }
        }
        let request = ChatRequest { template, placeholders, prompt, params: self.params };
        tracing::debug!(template = %template, "gateway call");
        self.client.complete(&request)
    }
}

/// Build a placeholder map from pairs.
pub fn placeholders<const N: usize>(pairs: [(&str, String); N]) -> Placeholders {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
