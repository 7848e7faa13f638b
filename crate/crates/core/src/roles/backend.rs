use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::CallKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("no scripted response matches this `{call}` prompt")]
    NoScriptMatch { call: String },
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("remote backend: {0}")]
    Remote(String),
    #[error("remote backends are not compiled into this build")]
    RemoteDisabled,
    #[error("loading script `{path}`: {message}")]
    Script { path: String, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub const fn new(prompt_tokens: u64, output_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            output_tokens,
        }
    }

    pub const fn total(&self) -> u64 {
        self.prompt_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.prompt_tokens + rhs.prompt_tokens,
            self.output_tokens + rhs.output_tokens,
        )
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

/// Whitespace-delimited token count used by offline backends.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl Completion {
    /// Completion whose usage is estimated from whitespace-delimited tokens.
    pub fn estimated(prompt: &str, text: impl Into<String>) -> Self {
        let text = text.into();
        let usage = TokenUsage::new(approx_tokens(prompt), approx_tokens(&text));
        Self { text, usage }
    }
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, call: CallKind, prompt: &str) -> Result<Completion, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<B> {
    fn complete(&self, call: CallKind, prompt: &str) -> Result<Completion, BackendError> {
        (**self).complete(call, prompt)
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for &B {
    fn complete(&self, call: CallKind, prompt: &str) -> Result<Completion, BackendError> {
        (**self).complete(call, prompt)
    }
}

/// One row of a [`ScriptedBackend`] table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Restricts the rule to one call kind (`plan`, `execute`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<CallKind>,
    /// Every substring must occur in the prompt.
    #[serde(default)]
    pub contains: Vec<String>,
    /// No substring may occur in the prompt.
    #[serde(default)]
    pub not_contains: Vec<String>,
    pub response: String,
}

impl ScriptRule {
    pub fn new(call: Option<CallKind>, contains: &[&str], response: impl Into<String>) -> Self {
        Self {
            call,
            contains: contains.iter().map(|s| s.to_string()).collect(),
            not_contains: Vec::new(),
            response: response.into(),
        }
    }

    pub fn unless(mut self, absent: &[&str]) -> Self {
        self.not_contains.extend(absent.iter().map(|s| s.to_string()));
        self
    }

    fn matches(&self, call: CallKind, prompt: &str) -> bool {
        self.call.is_none_or(|c| c == call)
            && self.contains.iter().all(|s| prompt.contains(s.as_str()))
            && !self.not_contains.iter().any(|s| prompt.contains(s.as_str()))
    }
}

/// Deterministic pattern-to-response table; the first matching rule answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBackend {
    pub rules: Vec<ScriptRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self {
            rules,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let err = |message: String| BackendError::Script {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, call: CallKind, prompt: &str) -> Result<Completion, BackendError> {
        self.rules
            .iter()
            .find(|rule| rule.matches(call, prompt))
            .map(|rule| rule.response.as_str())
            .or(self.fallback.as_deref())
            .map(|text| Completion::estimated(prompt, text))
            .ok_or_else(|| BackendError::NoScriptMatch {
                call: call.to_string(),
            })
    }
}

/// Backend driven by a pure function of (call kind, prompt).
pub struct FnBackend<F>(pub F);

impl<F> fmt::Debug for FnBackend<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnBackend")
    }
}

impl<F> ModelBackend for FnBackend<F>
where
    F: Fn(CallKind, &str) -> String + Send + Sync,
{
    fn complete(&self, call: CallKind, prompt: &str) -> Result<Completion, BackendError> {
        Ok(Completion::estimated(prompt, (self.0)(call, prompt)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let backend = ScriptedBackend::new(vec![
            ScriptRule::new(Some(CallKind::Plan), &["Peoria"], "plan A"),
            ScriptRule::new(None, &["Peoria"], "any"),
            ScriptRule::new(None, &[], "default").unless(&["skip"]),
        ]);
        assert_eq!(backend.complete(CallKind::Plan, "to Peoria").unwrap().text, "plan A");
        assert_eq!(backend.complete(CallKind::Execute, "to Peoria").unwrap().text, "any");
        assert_eq!(backend.complete(CallKind::Execute, "x").unwrap().text, "default");
        assert!(matches!(
            backend.complete(CallKind::Execute, "skip"),
            Err(BackendError::NoScriptMatch { .. })
        ));
    }

    #[test]
    fn referentially_transparent() {
        let backend = ScriptedBackend::default().with_fallback("one two three");
        let first = backend.complete(CallKind::Evaluate, "a b").unwrap();
        for _ in 0..10 {
            assert_eq!(backend.complete(CallKind::Evaluate, "a b").unwrap(), first);
        }
        assert_eq!(first.usage, TokenUsage::new(2, 3));
    }

    #[test]
    fn script_file_round_trip() {
        let backend = ScriptedBackend::new(vec![ScriptRule::new(Some(CallKind::Execute), &["x"], "Search[x]")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, serde_json::to_string(&backend).unwrap()).unwrap();
        assert_eq!(ScriptedBackend::from_file(&path).unwrap(), backend);
        assert!(ScriptedBackend::from_file(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn usage_arithmetic() {
        let total: TokenUsage = [TokenUsage::new(1, 2), TokenUsage::new(3, 4)].into_iter().sum();
        assert_eq!(total, TokenUsage::new(4, 6));
        assert_eq!(total.total(), 10);
    }
}
