//! Prompt templates with `{placeholder}` markers.
//!
//! Doubled braces (`{{`, `}}`) render as literal braces. A `{` that does not
//! open an identifier followed by `}` is copied through unchanged. Bound values
//! are inserted verbatim and never re-scanned.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("template `{template}` has no binding for placeholder `{placeholder}`")]
    MissingBinding { template: String, placeholder: String },
    #[error("reading template `{path}`: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Construct,
    Plan,
    Execute,
    Evaluate,
    Replan,
    Revise,
    /// Single-role prompt used by the ReAct baseline.
    React,
}

impl TemplateName {
    pub const ALL: [TemplateName; 7] = [
        TemplateName::Construct,
        TemplateName::Plan,
        TemplateName::Execute,
        TemplateName::Evaluate,
        TemplateName::Replan,
        TemplateName::Revise,
        TemplateName::React,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Construct => "construct",
            TemplateName::Plan => "plan",
            TemplateName::Execute => "execute",
            TemplateName::Evaluate => "evaluate",
            TemplateName::Replan => "replan",
            TemplateName::Revise => "revise",
            TemplateName::React => "react",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateName::Construct => include_str!("../../templates/construct.txt"),
            TemplateName::Plan => include_str!("../../templates/plan.txt"),
            TemplateName::Execute => include_str!("../../templates/execute.txt"),
            TemplateName::Evaluate => include_str!("../../templates/evaluate.txt"),
            TemplateName::Replan => include_str!("../../templates/replan.txt"),
            TemplateName::Revise => include_str!("../../templates/revise.txt"),
            TemplateName::React => include_str!("../../templates/react.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn pieces(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Literal(&body[literal_start..i + 1]));
                i += 2;
                literal_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Literal(&body[literal_start..i + 1]));
                i += 2;
                literal_start = i;
            }
            b'{' => match body[i + 1..].find('}') {
                Some(len) if is_ident(&body[i + 1..i + 1 + len]) => {
                    out.push(Piece::Literal(&body[literal_start..i]));
                    out.push(Piece::Placeholder(&body[i + 1..i + 1 + len]));
                    i += len + 2;
                    literal_start = i;
                }
                _ => i += 1,
            },
            _ => i += 1,
        }
    }
    out.push(Piece::Literal(&body[literal_start..]));
    out
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Self {
        Self {
            name,
            body: body.into(),
        }
    }

    pub fn builtin(name: TemplateName) -> Self {
        Self::new(name, name.default_body())
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        pieces(&self.body)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Placeholder(name) => Some(name.to_string()),
                Piece::Literal(_) => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, RenderError> {
        render_prompt(self, bindings)
    }
}

/// Placeholder values for one rendering.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    /// Absent or blank values render as the literal `None`.
    pub fn optional(self, name: &str, value: Option<&str>) -> Self {
        let value = value.filter(|v| !v.trim().is_empty()).unwrap_or("None");
        self.set(name, value)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

pub fn render_prompt(template: &PromptTemplate, bindings: &Bindings) -> Result<String, RenderError> {
    let mut out = String::with_capacity(template.body.len() + 256);
    for piece in pieces(&template.body) {
        match piece {
            Piece::Literal(text) => out.push_str(text),
            Piece::Placeholder(name) => match bindings.get(name) {
                Some(value) => out.push_str(value),
                None => {
                    return Err(RenderError::MissingBinding {
                        template: template.name.to_string(),
                        placeholder: name.to_string(),
                    })
                }
            },
        }
    }
    Ok(out)
}

/// The full set of templates a run uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: TemplateName::ALL
                .into_iter()
                .map(|n| (n, PromptTemplate::builtin(n)))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Built-in templates, overridden by any `<name>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, RenderError> {
        let mut set = Self::default();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", name.as_str()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| RenderError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            set.templates.insert(name, PromptTemplate::new(name, body));
        }
        Ok(set)
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    pub fn set(&mut self, template: PromptTemplate) {
        self.templates.insert(template.name, template);
    }
}
