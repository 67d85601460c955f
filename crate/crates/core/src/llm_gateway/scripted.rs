use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{symbolic, ChatClient, ChatRequest, GatewayError, Placeholders, TemplateId};

/// Stable digest of a placeholder map: SHA-256 over `key\0value\0` pairs in
/// key order, hex encoded.
pub fn placeholder_digest(values: &Placeholders) -> String {
    let mut h = Sha256::new();
    for (k, v) in values {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub template: TemplateId,
    pub digest: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhenClause {
    pub placeholder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_contains: Option<String>,
}

impl WhenClause {
    fn holds(&self, values: &Placeholders) -> bool {
        let Some(v) = values.get(&self.placeholder) else { return false };
        self.equals.as_ref().is_none_or(|e| v == e)
            && self.contains.as_ref().is_none_or(|c| v.contains(c.as_str()))
            && self.not_contains.as_ref().is_none_or(|c| !v.contains(c.as_str()))
    }
}

/// A canned response used when every clause holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub template: TemplateId,
    pub when: Vec<WhenClause>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Rule-based answer computed from the placeholders.
    Symbolic,
    Text(String),
    /// No fallback: unmatched requests are errors.
    Fail,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Per-template fallback; templates not listed use the symbolic responder.
    #[serde(default)]
    pub fallback: BTreeMap<TemplateId, Fallback>,
}

impl Script {
    pub fn from_json(text: &str) -> Result<Script, GatewayError> {
        serde_json::from_str(text).map_err(|e| GatewayError::InvalidScript(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Script, GatewayError> {
        Script::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn golden() -> Script {
        Script::from_json(include_str!("../../fixtures/scripts/golden.json")).expect("golden script parses")
    }
}

/// Deterministic backend: exact digest entries, then rules in file order,
/// then the per-template fallback.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    script: Script,
    by_digest: HashMap<(TemplateId, String), String>,
}

impl ScriptedClient {
    pub fn new(script: Script) -> Self {
        let by_digest = script
            .entries
            .iter()
            .map(|e| ((e.template, e.digest.clone()), e.response.clone()))
            .collect();
        ScriptedClient { script, by_digest }
    }

    /// Symbolic responder only.
    pub fn symbolic() -> Self {
        ScriptedClient::new(Script::default())
    }

    pub fn golden() -> Self {
        ScriptedClient::new(Script::golden())
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    pub fn respond(&self, template: TemplateId, values: &Placeholders) -> Result<String, GatewayError> {
        let digest = placeholder_digest(values);
        if let Some(r) = self.by_digest.get(&(template, digest.clone())) {
            return Ok(r.clone());
        }
        if let Some(rule) = self
            .script
            .rules
            .iter()
            .find(|r| r.template == template && r.when.iter().all(|w| w.holds(values)))
        {
            return Ok(rule.response.clone());
        }
        match self.script.fallback.get(&template).unwrap_or(&Fallback::Symbolic) {
            Fallback::Symbolic => Ok(symbolic::respond(template, values)),
            Fallback::Text(t) => Ok(t.clone()),
            Fallback::Fail => Err(GatewayError::NoScriptedResponse { template, digest }),
        }
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.respond(request.template, &request.placeholders)
    }
}
