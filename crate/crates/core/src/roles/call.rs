use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, Completion, ModelBackend, TokenUsage};
use super::template::{Bindings, PromptTemplate, RenderError};
use super::CallKind;

pub const DEFAULT_RETRY_BUDGET: u32 = 2;

/// One prompt/completion exchange, successful or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub prompt: String,
    pub completion: Completion,
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleOutput<T> {
    pub value: T,
    /// Sum over every attempt, failed ones included.
    pub usage: TokenUsage,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoleFaultKind {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("output still unparseable after {attempts} attempts: {last_error}")]
    Exhausted { attempts: usize, last_error: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleFault {
    pub call: CallKind,
    pub kind: RoleFaultKind,
    pub attempts: Vec<Attempt>,
}

impl RoleFault {
    pub fn usage(&self) -> TokenUsage {
        self.attempts.iter().map(|a| a.completion.usage).sum()
    }

    pub fn last_raw(&self) -> Option<&str> {
        self.attempts.last().map(|a| a.completion.text.as_str())
    }
}

impl fmt::Display for RoleFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} call failed: {}", self.call, self.kind)
    }
}

impl std::error::Error for RoleFault {}

fn reminder(retry: u32, budget: u32, error: &str) -> String {
    format!(
        "\n\nFormat reminder (retry {retry} of {budget}): your previous reply could not be parsed ({error}). Reply again using exactly the required output format."
    )
}

/// Renders, completes and parses, re-prompting up to `retry_budget` times.
pub fn call_role<T, E, P>(
    backend: &dyn ModelBackend,
    call: CallKind,
    template: &PromptTemplate,
    bindings: &Bindings,
    parser: P,
    retry_budget: u32,
) -> Result<RoleOutput<T>, RoleFault>
where
    E: fmt::Display,
    P: Fn(&str) -> Result<T, E>,
{
    let base = template.render(bindings).map_err(|e| RoleFault {
        call,
        kind: e.into(),
        attempts: Vec::new(),
    })?;
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut prompt = base.clone();
    for retry in 0..=retry_budget {
        if retry > 0 {
            let last_error = attempts
                .last()
                .and_then(|a| a.parse_error.clone())
                .unwrap_or_default();
            prompt.push_str(&reminder(retry, retry_budget, &last_error));
        }
        let completion = match backend.complete(call, &prompt) {
            Ok(c) => c,
            Err(e) => {
                return Err(RoleFault {
                    call,
                    kind: e.into(),
                    attempts,
                })
            }
        };
        match parser(&completion.text) {
            Ok(value) => {
                attempts.push(Attempt {
                    prompt: prompt.clone(),
                    completion,
                    parse_error: None,
                });
                let usage = attempts.iter().map(|a| a.completion.usage).sum();
                return Ok(RoleOutput {
                    value,
                    usage,
                    attempts,
                });
            }
            Err(e) => attempts.push(Attempt {
                prompt: prompt.clone(),
                completion,
                parse_error: Some(e.to_string()),
            }),
        }
    }
    let last_error = attempts
        .last()
        .and_then(|a| a.parse_error.clone())
        .unwrap_or_default();
    Err(RoleFault {
        call,
        kind: RoleFaultKind::Exhausted {
            attempts: attempts.len(),
            last_error,
        },
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::roles::{parse_plan, FnBackend, ScriptRule, ScriptedBackend, TemplateName};

    fn plan_bindings() -> Bindings {
        Bindings::new()
            .set("task_description", "t")
            .set("nodes_description", "s")
            .set("admissible_commands", "a")
            .set("history", "(no actions yet)")
    }

    #[test]
    fn first_try_success_uses_single_usage() {
        let backend = ScriptedBackend::default().with_fallback("## Step 1\nReasoning: r\nStep: s");
        let template = PromptTemplate::builtin(TemplateName::Plan);
        let out = call_role(&backend, CallKind::Plan, &template, &plan_bindings(), parse_plan, 2).unwrap();
        assert_eq!(out.attempts.len(), 1);
        assert_eq!(out.usage, out.attempts[0].completion.usage);
    }

    #[test]
    fn invalid_then_valid_sums_usage() {
        let backend = ScriptedBackend::new(vec![
            ScriptRule::new(None, &["retry 1 of 2"], "## Step 1\nReasoning: r\nStep: s"),
            ScriptRule::new(None, &[], "garbage words here"),
        ]);
        let template = PromptTemplate::builtin(TemplateName::Plan);
        let out = call_role(&backend, CallKind::Plan, &template, &plan_bindings(), parse_plan, 2).unwrap();
        assert_eq!(out.attempts.len(), 2);
        assert_eq!(
            out.usage,
            out.attempts[0].completion.usage + out.attempts[1].completion.usage
        );
        assert!(out.attempts[1].prompt.starts_with(&out.attempts[0].prompt));
    }

    #[test]
    fn always_invalid_exhausts_after_budget_plus_one() {
        let calls = AtomicUsize::new(0);
        let backend = FnBackend(|_, _: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            "never a plan".to_string()
        });
        let template = PromptTemplate::builtin(TemplateName::Plan);
        let fault =
            call_role(&backend, CallKind::Plan, &template, &plan_bindings(), parse_plan, 2).unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert_eq!(fault.attempts.len(), 3);
        assert_eq!(fault.last_raw(), Some("never a plan"));
        assert!(matches!(fault.kind, RoleFaultKind::Exhausted { attempts: 3, .. }));
    }

    #[test]
    fn render_fault_before_any_call() {
        let backend = ScriptedBackend::default();
        let template = PromptTemplate::builtin(TemplateName::Plan);
        let fault =
            call_role(&backend, CallKind::Plan, &template, &Bindings::new(), parse_plan, 2).unwrap_err();
        assert!(matches!(fault.kind, RoleFaultKind::Render(_)));
        assert!(fault.attempts.is_empty());
    }
}
