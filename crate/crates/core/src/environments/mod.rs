//! Environment interface and three deterministic mocks:
//! a wiki lookup world, a travel tool world and a small text lab with dense reward.

mod fixture;
mod lab;
mod travel;
mod wiki;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixture::{
    load_fixture_set, ConstraintCategory, ConstraintRule, Gold, Payload, PlanConstraint,
    TaskInstance, FIXTURE_VERSION,
};
pub use lab::{GoalCondition, LabObject, LabPayload, LabWorld, Room, TextLab, INVENTORY};
pub use travel::{
    Accommodation, Attraction, CityList, DistanceRow, Flight, Restaurant, TravelPayload, TravelToy,
};
pub use wiki::{Article, MockWiki, WikiPayload};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("environment is done; no further steps are accepted")]
    AlreadyDone,
    #[error("environment has not been reset with a task")]
    NotReset,
    #[error("task `{task}` carries a {found} payload, expected {expected}")]
    PayloadMismatch {
        task: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("fixture `{path}`: {message}")]
    Fixture { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: String,
    /// Reward gained by this step, for reward-bearing environments.
    pub reward_delta: Option<f64>,
    pub done: bool,
}

impl StepResult {
    fn plain(observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            reward_delta: None,
            done: false,
        }
    }
}

/// Environment-specific outcome record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvMetrics {
    pub done: bool,
    /// A terminal deliverable was produced (Finish, MakePlan, or all lab goals).
    pub delivered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

pub trait Environment: Send {
    fn kind(&self) -> EnvKind;
    /// Clears all state and loads `task`; returns the initial observation.
    fn reset(&mut self, task: &TaskInstance) -> Result<String, EnvError>;
    fn step(&mut self, action: &str) -> Result<StepResult, EnvError>;
    fn admissible_commands(&self) -> Vec<String>;
    fn is_done(&self) -> bool;
    fn metrics(&self) -> EnvMetrics;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[serde(rename = "mockwiki")]
    MockWiki,
    #[serde(rename = "traveltoy")]
    TravelToy,
    #[serde(rename = "textlab")]
    TextLab,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::MockWiki => "mockwiki",
            EnvKind::TravelToy => "traveltoy",
            EnvKind::TextLab => "textlab",
        }
    }

    pub fn parse(name: &str) -> Result<Self, EnvError> {
        match name {
            "mockwiki" => Ok(EnvKind::MockWiki),
            "traveltoy" => Ok(EnvKind::TravelToy),
            "textlab" => Ok(EnvKind::TextLab),
            other => Err(EnvError::UnknownEnvironment(other.to_string())),
        }
    }

    pub fn create(self) -> Box<dyn Environment> {
        match self {
            EnvKind::MockWiki => Box::new(MockWiki::default()),
            EnvKind::TravelToy => Box::new(TravelToy::default()),
            EnvKind::TextLab => Box::new(TextLab::default()),
        }
    }
}

/// Renders admissible commands one per line for prompts.
pub fn render_commands(commands: &[String]) -> String {
    commands.join("\n")
}

/// Splits `Name[a, b, c]` into the tool name and its raw argument text.
pub(crate) fn split_call(action: &str) -> Option<(&str, &str)> {
    let action = action.trim();
    let open = action.find('[')?;
    let inner = action[open + 1..].strip_suffix(']')?;
    let name = action[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric()) {
        return None;
    }
    Some((name, inner))
}

pub(crate) fn split_args(inner: &str) -> Vec<String> {
    inner.split(',').map(|a| a.trim().to_string()).collect()
}

pub(crate) fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}
