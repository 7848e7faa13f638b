#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use tdp_core::engine::{RoleBackends, RunConfig};
use tdp_core::environments::{
    load_fixture_set, Article, Gold, Payload, TaskInstance, WikiPayload,
};
use tdp_core::roles::{CallKind, FnBackend};
use tdp_core::telemetry::{EventPayload, TraceEvent};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn toy3() -> Vec<TaskInstance> {
    load_fixture_set(&fixtures_dir().join("toy3")).expect("toy3 fixtures load")
}

pub fn toy3_task(id: &str) -> TaskInstance {
    toy3().into_iter().find(|t| t.id == id).expect("fixture present")
}

pub fn backends<F>(f: F) -> RoleBackends
where
    F: Fn(CallKind, &str) -> String + Send + Sync + 'static,
{
    RoleBackends::uniform(Arc::new(FnBackend(f)))
}

pub fn config(s_max: u32) -> RunConfig {
    RunConfig {
        s_max,
        ..RunConfig::default()
    }
}

pub fn wiki_task(id: &str, query: &str, articles: &[(&str, &str)], answer: Option<&str>) -> TaskInstance {
    TaskInstance {
        version: 1,
        id: id.into(),
        query: query.into(),
        gold: Gold {
            answer: answer.map(str::to_string),
            constraints: Vec::new(),
        },
        payload: Payload::MockWiki(WikiPayload {
            articles: articles
                .iter()
                .map(|(title, text)| Article {
                    title: title.to_string(),
                    text: text.to_string(),
                })
                .collect(),
        }),
    }
}

/// `## Step N` plan whose step texts are the given actions.
pub fn plan_text(steps: &[&str]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("## Step {}\nReasoning: step {} of the plan\nStep: {s}", i + 1, i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn eval(status: &str, reason: Option<&str>, need_replan: bool) -> String {
    serde_json::json!({ "status": status, "reason": reason, "need_replan": need_replan }).to_string()
}

pub fn completed() -> String {
    eval("completed", Some("Subgoal achieved."), false)
}

pub fn replan_to(steps: &[&str]) -> String {
    serde_json::json!({ "RePlan": true, "Thought": "The old plan cannot work.", "NewPlan": plan_text(steps) })
        .to_string()
}

pub fn subgoals(nodes: &[(&str, &str, &[&str])]) -> String {
    let list: Vec<_> = nodes
        .iter()
        .map(|(id, d, deps)| serde_json::json!({ "id": id, "description": d, "dependencies": deps }))
        .collect();
    serde_json::json!({ "subgoals": list }).to_string()
}

pub fn no_revision() -> String {
    serde_json::json!({
        "thought": "Pending nodes can finish the task.",
        "need_update": false,
        "description_updates": [],
        "new_nodes": [],
        "remove_nodes": []
    })
    .to_string()
}

/// Text after `label` on the first line that starts with it.
pub fn field<'a>(prompt: &'a str, label: &str) -> &'a str {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
        .unwrap_or("")
}

pub fn last_observation(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Observation: "))
        .unwrap_or("")
}

/// Every prompt sent for `node`, across all attempts.
pub fn prompts_for<'a>(events: &'a [TraceEvent], node: &str) -> Vec<&'a str> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::RoleCall {
                node: Some(n), attempts, ..
            } if n.as_str() == node => Some(attempts.iter().map(|a| a.prompt.as_str())),
            _ => None,
        })
        .flatten()
        .collect()
}
