//! Role prompts, model backends and the structured output parsers.

mod backend;
mod call;
mod parse;
mod plan;
mod remote;
mod template;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use backend::{
    approx_tokens, BackendError, Completion, FnBackend, ModelBackend, ScriptRule, ScriptedBackend,
    TokenUsage,
};
pub use call::{call_role, Attempt, RoleFault, RoleFaultKind, RoleOutput, DEFAULT_RETRY_BUDGET};
pub use parse::{
    extract_action, extract_json, parse_evaluation, parse_react, parse_replan, parse_revision,
    parse_subgoals, render_revision, render_subgoals, EvalStatus, Evaluation, ParseError,
    ReactStep, ReplanDecision,
};
pub use plan::{parse_plan, render_plan, Plan, PlanStep};
pub use remote::{RemoteChatBackend, RemoteChatConfig};
pub use template::{
    render_prompt, Bindings, PromptTemplate, RenderError, TemplateName, TemplateSet,
};

/// The three model-backed roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Supervisor,
    Planner,
    Executor,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Supervisor, Role::Planner, Role::Executor];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Supervisor => "supervisor",
            Role::Planner => "planner",
            Role::Executor => "executor",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which prompt a model call answers. Doubles as the backend role tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Construct,
    Plan,
    Execute,
    Evaluate,
    Replan,
    Revise,
    React,
}

impl CallKind {
    pub fn role(self) -> Role {
        match self {
            CallKind::Construct | CallKind::Evaluate | CallKind::Revise => Role::Supervisor,
            CallKind::Plan | CallKind::Replan => Role::Planner,
            CallKind::Execute | CallKind::React => Role::Executor,
        }
    }

    pub fn template(self) -> TemplateName {
        match self {
            CallKind::Construct => TemplateName::Construct,
            CallKind::Plan => TemplateName::Plan,
            CallKind::Execute => TemplateName::Execute,
            CallKind::Evaluate => TemplateName::Evaluate,
            CallKind::Replan => TemplateName::Replan,
            CallKind::Revise => TemplateName::Revise,
            CallKind::React => TemplateName::React,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.template().as_str()
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
