//! Strict parsers for the structured role outputs.
//!
//! Every JSON-bearing reply goes through [`extract_json`] first, which finds the
//! first balanced object that parses, so code fences and surrounding prose are
//! tolerated. Inside that object required fields and enum values are checked
//! strictly; unknown extra fields are ignored.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::plan::{parse_plan, Plan};
use crate::graph::{DescriptionUpdate, NewNodeSpec, NodeId, RevisionDelta, SubgoalSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object found in reply")]
    NoJsonObject { raw: String },
    #[error("invalid JSON: {message}")]
    Json { message: String, raw: String },
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("field `{field}` must be {expected}")]
    WrongType { field: String, expected: &'static str },
    #[error("field `{field}` has value `{value}` outside the allowed set")]
    InvalidEnum { field: String, value: String },
    #[error("{0}")]
    Invariant(String),
    #[error("decomposition is empty")]
    EmptyDecomposition,
    #[error("duplicate subgoal id `{0}`")]
    DuplicateId(String),
    #[error("subgoal `{node}` depends on unknown id `{missing}`")]
    DanglingDependency { node: String, missing: String },
    #[error("plan: {0}")]
    Plan(String),
    #[error("no `Action:` line in reply")]
    NoAction,
}

/// Finds the end (exclusive) of the balanced object starting at `start`.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Returns the first balanced JSON object embedded in `text`.
pub fn extract_json(text: &str) -> Result<Map<String, Value>, ParseError> {
    let bytes = text.as_bytes();
    let mut last_error = None;
    for (start, _) in text.match_indices('{') {
        let Some(end) = balanced_end(bytes, start) else {
            continue;
        };
        match serde_json::from_str::<Value>(&text[start..end]) {
            Ok(Value::Object(map)) => return Ok(map),
            Ok(_) => {}
            Err(e) => {
                last_error.get_or_insert(e.to_string());
            }
        }
    }
    Err(match last_error {
        Some(message) => ParseError::Json {
            message,
            raw: text.to_string(),
        },
        None => ParseError::NoJsonObject {
            raw: text.to_string(),
        },
    })
}

fn required<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a Value, ParseError> {
    map.get(field)
        .ok_or_else(|| ParseError::MissingField(field.to_string()))
}

fn required_bool(map: &Map<String, Value>, field: &str) -> Result<bool, ParseError> {
    required(map, field)?
        .as_bool()
        .ok_or_else(|| ParseError::WrongType {
            field: field.to_string(),
            expected: "a boolean",
        })
}

fn required_str<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a str, ParseError> {
    required(map, field)?
        .as_str()
        .ok_or_else(|| ParseError::WrongType {
            field: field.to_string(),
            expected: "a string",
        })
}

fn nonempty_str<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a str, ParseError> {
    let s = required_str(map, field)?;
    if s.trim().is_empty() {
        return Err(ParseError::Invariant(format!("field `{field}` must be nonempty")));
    }
    Ok(s)
}

/// String or null; a missing key reads as null.
fn optional_str(map: &Map<String, Value>, field: &str) -> Result<Option<String>, ParseError> {
    match map.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ParseError::WrongType {
            field: field.to_string(),
            expected: "a string or null",
        }),
    }
}

fn string_list(map: &Map<String, Value>, field: &str) -> Result<Vec<String>, ParseError> {
    let wrong = || ParseError::WrongType {
        field: field.to_string(),
        expected: "a list of strings",
    };
    match map.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(wrong))
            .collect(),
        Some(_) => Err(wrong()),
    }
}

fn node_ids(map: &Map<String, Value>, field: &str) -> Result<Vec<NodeId>, ParseError> {
    string_list(map, field)?
        .into_iter()
        .map(|s| {
            NodeId::new(s).map_err(|_| ParseError::Invariant(format!("`{field}` contains an empty id")))
        })
        .collect()
}

fn objects<'a>(map: &'a Map<String, Value>, field: &str) -> Result<Vec<&'a Map<String, Value>>, ParseError> {
    let wrong = || ParseError::WrongType {
        field: field.to_string(),
        expected: "a list of objects",
    };
    match map.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items.iter().map(|v| v.as_object().ok_or_else(wrong)).collect(),
        Some(_) => Err(wrong()),
    }
}

pub fn parse_subgoals(text: &str) -> Result<Vec<SubgoalSpec>, ParseError> {
    let map = extract_json(text)?;
    let entries = match required(&map, "subgoals")? {
        Value::Array(items) => items,
        _ => {
            return Err(ParseError::WrongType {
                field: "subgoals".into(),
                expected: "a list of objects",
            })
        }
    };
    if entries.is_empty() {
        return Err(ParseError::EmptyDecomposition);
    }
    let mut specs = Vec::with_capacity(entries.len());
    let mut seen = BTreeSet::new();
    for entry in entries {
        let obj = entry.as_object().ok_or(ParseError::WrongType {
            field: "subgoals".into(),
            expected: "a list of objects",
        })?;
        let id = nonempty_str(obj, "id")?.trim().to_string();
        let description = nonempty_str(obj, "description")?.to_string();
        let dependencies = string_list(obj, "dependencies")?
            .into_iter()
            .map(|d| d.trim().to_string())
            .collect();
        if !seen.insert(id.clone()) {
            return Err(ParseError::DuplicateId(id));
        }
        specs.push(SubgoalSpec {
            id,
            description,
            dependencies,
        });
    }
    for spec in &specs {
        for dep in &spec.dependencies {
            if !seen.contains(dep) {
                return Err(ParseError::DanglingDependency {
                    node: spec.id.clone(),
                    missing: dep.clone(),
                });
            }
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Completed,
    Failed,
    NeedsMoreSteps,
}

impl EvalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalStatus::Completed => "completed",
            EvalStatus::Failed => "failed",
            EvalStatus::NeedsMoreSteps => "needs_more_steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub status: EvalStatus,
    pub reason: Option<String>,
    pub need_replan: bool,
}

impl Evaluation {
    /// Guidance for the next executor call, if this evaluation carries any.
    pub fn guidance(&self) -> Option<&str> {
        match (self.status, self.need_replan) {
            (EvalStatus::NeedsMoreSteps, false) => self.reason.as_deref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "status": self.status.as_str(),
            "reason": self.reason,
            "need_replan": self.need_replan,
        })
        .to_string()
    }
}

pub fn parse_evaluation(text: &str) -> Result<Evaluation, ParseError> {
    let map = extract_json(text)?;
    let raw_status = required_str(&map, "status")?;
    let status = match raw_status.trim() {
        "completed" => EvalStatus::Completed,
        "failed" => EvalStatus::Failed,
        "needs_more_steps" => EvalStatus::NeedsMoreSteps,
        other => {
            return Err(ParseError::InvalidEnum {
                field: "status".into(),
                value: other.to_string(),
            })
        }
    };
    let reason = optional_str(&map, "reason")?;
    let need_replan = required_bool(&map, "need_replan")?;
    if status == EvalStatus::NeedsMoreSteps && !need_replan && reason.is_none() {
        return Err(ParseError::Invariant(
            "needs_more_steps without replanning requires guidance in `reason`".into(),
        ));
    }
    Ok(Evaluation {
        status,
        reason,
        need_replan,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplanDecision {
    pub replan: bool,
    pub thought: Option<String>,
    pub new_plan: Option<Plan>,
}

impl ReplanDecision {
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "RePlan": self.replan,
            "Thought": self.thought,
            "NewPlan": self.new_plan.as_ref().map(super::plan::render_plan),
        })
        .to_string()
    }
}

pub fn parse_replan(text: &str) -> Result<ReplanDecision, ParseError> {
    let map = extract_json(text)?;
    let replan = required_bool(&map, "RePlan")?;
    let thought = optional_str(&map, "Thought")?;
    let new_plan = optional_str(&map, "NewPlan")?;
    match (replan, new_plan) {
        (true, None) => Err(ParseError::Invariant("RePlan is true but NewPlan is null".into())),
        (true, Some(plan_text)) => Ok(ReplanDecision {
            replan,
            thought,
            new_plan: Some(parse_plan(&plan_text)?),
        }),
        (false, Some(_)) => Err(ParseError::Invariant("RePlan is false but NewPlan is present".into())),
        (false, None) => Ok(ReplanDecision {
            replan,
            thought,
            new_plan: None,
        }),
    }
}

pub fn parse_revision(text: &str) -> Result<RevisionDelta, ParseError> {
    let map = extract_json(text)?;
    let need_update = required_bool(&map, "need_update")?;
    let thought = optional_str(&map, "thought")?.unwrap_or_default();

    let mut description_updates = Vec::new();
    for obj in objects(&map, "description_updates")? {
        let node_id = NodeId::new(nonempty_str(obj, "node_id")?.trim())
            .map_err(|_| ParseError::Invariant("empty node_id".into()))?;
        let new_description = nonempty_str(obj, "new_description")?.to_string();
        description_updates.push(DescriptionUpdate {
            node_id,
            new_description,
        });
    }

    let mut new_nodes = Vec::new();
    for obj in objects(&map, "new_nodes")? {
        let id = optional_str(obj, "id")?.map(|s| NodeId::new(s.trim()).expect("checked nonempty"));
        new_nodes.push(NewNodeSpec {
            id,
            description: nonempty_str(obj, "description")?.to_string(),
            dependencies: node_ids(obj, "dependencies")?,
            dependents: node_ids(obj, "dependents")?,
        });
    }

    Ok(RevisionDelta {
        thought,
        need_update,
        description_updates,
        new_nodes,
        remove_nodes: node_ids(&map, "remove_nodes")?,
    })
}

/// Renders a delta in the revision reply schema.
pub fn render_revision(delta: &RevisionDelta) -> String {
    serde_json::json!({
        "thought": delta.thought,
        "need_update": delta.need_update,
        "description_updates": delta.description_updates.iter().map(|u| serde_json::json!({
            "node_id": u.node_id.as_str(),
            "new_description": u.new_description,
        })).collect::<Vec<_>>(),
        "new_nodes": delta.new_nodes.iter().map(|n| serde_json::json!({
            "id": n.id.as_ref().map(NodeId::as_str),
            "description": n.description,
            "dependencies": n.dependencies.iter().map(NodeId::as_str).collect::<Vec<_>>(),
            "dependents": n.dependents.iter().map(NodeId::as_str).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "remove_nodes": delta.remove_nodes.iter().map(NodeId::as_str).collect::<Vec<_>>(),
    })
    .to_string()
}

/// Renders sub-goals in the construction reply schema.
pub fn render_subgoals(specs: &[SubgoalSpec]) -> String {
    serde_json::json!({ "subgoals": specs }).to_string()
}

/// Executor reply: trimmed, with one layer of code fence or quotes removed.
pub fn extract_action(text: &str) -> String {
    let mut action = text.trim();
    if let Some(inner) = action.strip_prefix("```").and_then(|s| s.strip_suffix("```")) {
        // drop an optional language tag on the opening fence line
        action = match inner.split_once('\n') {
            Some((first, rest)) if !first.trim().is_empty() && !rest.trim().is_empty() => rest,
            _ => inner,
        };
        action = action.trim();
    } else {
        for quote in ['"', '\'', '`'] {
            if action.len() >= 2 && action.starts_with(quote) && action.ends_with(quote) {
                action = action[1..action.len() - 1].trim();
                break;
            }
        }
    }
    action.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactStep {
    pub thought: String,
    pub action: String,
}

/// Thought/Action reply of the ReAct baseline. The last `Action:` line wins.
pub fn parse_react(text: &str) -> Result<ReactStep, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let position = lines
        .iter()
        .rposition(|l| l.trim_start().starts_with("Action:"))
        .ok_or(ParseError::NoAction)?;
    let action = extract_action(lines[position].trim_start().trim_start_matches("Action:"));
    if action.is_empty() {
        return Err(ParseError::NoAction);
    }
    let thought = lines[..position]
        .join("\n")
        .trim()
        .trim_start_matches("Thought:")
        .trim()
        .to_string();
    Ok(ReactStep { thought, action })
}
