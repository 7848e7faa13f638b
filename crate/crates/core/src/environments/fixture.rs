use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lab::LabPayload;
use super::travel::TravelPayload;
use super::wiki::WikiPayload;
use super::{normalize, EnvError, EnvKind};

pub const FIXTURE_VERSION: u32 = 1;

/// Gold record for metric computation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Gold {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<PlanConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintCategory {
    Commonsense,
    Hard,
}

/// One checklist item evaluated against the final plan text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConstraint {
    pub name: String,
    pub category: ConstraintCategory,
    #[serde(flatten)]
    pub rule: ConstraintRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ConstraintRule {
    /// Plan text must contain `text` (case-insensitive).
    Includes { text: String },
    /// Plan text must not contain `text` (case-insensitive).
    Excludes { text: String },
    /// Sum of every `cost=<number>` field in the plan must not exceed `limit`.
    MaxTotalCost { limit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    #[serde(rename = "mockwiki")]
    MockWiki(WikiPayload),
    #[serde(rename = "traveltoy")]
    TravelToy(TravelPayload),
    #[serde(rename = "textlab")]
    TextLab(LabPayload),
}

impl Payload {
    pub fn kind(&self) -> EnvKind {
        match self {
            Payload::MockWiki(_) => EnvKind::MockWiki,
            Payload::TravelToy(_) => EnvKind::TravelToy,
            Payload::TextLab(_) => EnvKind::TextLab,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub version: u32,
    pub id: String,
    pub query: String,
    #[serde(default)]
    pub gold: Gold,
    pub payload: Payload,
}

impl TaskInstance {
    pub fn env_kind(&self) -> EnvKind {
        self.payload.kind()
    }

    /// Checks the gold record against the payload.
    pub fn validate(&self) -> Result<(), String> {
        if self.version != FIXTURE_VERSION {
            return Err(format!("unsupported fixture version {}", self.version));
        }
        if self.id.trim().is_empty() {
            return Err("task id is empty".into());
        }
        match &self.payload {
            Payload::MockWiki(wiki) => {
                if let Some(answer) = &self.gold.answer {
                    let needle = normalize(answer);
                    if !wiki.articles.iter().any(|a| normalize(&a.text).contains(&needle)) {
                        return Err(format!("gold answer `{answer}` appears in no article"));
                    }
                }
                Ok(())
            }
            Payload::TravelToy(_) => Ok(()),
            Payload::TextLab(lab) => lab.validate(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let task: TaskInstance = serde_json::from_str(text).map_err(|e| e.to_string())?;
        task.validate()?;
        Ok(task)
    }
}

/// Loads one fixture file, or every `*.json` in a directory sorted by file name.
pub fn load_fixture_set(path: &Path) -> Result<Vec<TaskInstance>, EnvError> {
    let err = |p: &Path, message: String| EnvError::Fixture {
        path: p.display().to_string(),
        message,
    };
    if !path.exists() {
        return Err(err(path, "no such file or directory".into()));
    }
    let files = if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| err(path, e.to_string()))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(err(path, "directory holds no *.json fixtures".into()));
        }
        files
    } else {
        vec![path.to_path_buf()]
    };
    files
        .iter()
        .map(|file| {
            let text = std::fs::read_to_string(file).map_err(|e| err(file, e.to_string()))?;
            TaskInstance::from_json(&text).map_err(|m| err(file, m))
        })
        .collect()
}
