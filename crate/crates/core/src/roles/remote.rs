//! Chat-completions HTTP backend.

use serde::{Deserialize, Serialize};
#[cfg(feature = "remote")]
use serde_json::{json, Value};

#[cfg(feature = "remote")]
use super::backend::{approx_tokens, TokenUsage};
use super::backend::{BackendError, Completion, ModelBackend};
use super::CallKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug)]
pub struct RemoteChatBackend {
    config: RemoteChatConfig,
    #[cfg_attr(not(feature = "remote"), allow(dead_code))]
    api_key: String,
    #[cfg(feature = "remote")]
    agent: ureq::Agent,
}

impl RemoteChatBackend {
    /// Reads the credential from the configured environment variable.
    pub fn from_env(config: RemoteChatConfig) -> Result<Self, BackendError> {
        if !cfg!(feature = "remote") {
            return Err(BackendError::RemoteDisabled);
        }
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| BackendError::MissingCredential(config.api_key_env.clone()))?;
        #[cfg(feature = "remote")]
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            #[cfg(feature = "remote")]
            agent,
        })
    }

    pub fn config(&self) -> &RemoteChatConfig {
        &self.config
    }
}

#[cfg(feature = "remote")]
pub(crate) fn completion_from_response(prompt: &str, body: &Value) -> Result<Completion, BackendError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Remote("response has no choices[0].message.content".into()))?
        .to_string();
    let usage = match body.get("usage") {
        Some(u) => TokenUsage::new(
            u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        ),
        None => TokenUsage::new(approx_tokens(prompt), approx_tokens(&text)),
    };
    Ok(Completion { text, usage })
}

impl ModelBackend for RemoteChatBackend {
    #[cfg(feature = "remote")]
    fn complete(&self, _call: CallKind, prompt: &str) -> Result<Completion, BackendError> {
        let request = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&request)
            .map_err(|e| BackendError::Remote(e.to_string()))?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Remote(e.to_string()))?;
        completion_from_response(prompt, &body)
    }

    #[cfg(not(feature = "remote"))]
    fn complete(&self, _call: CallKind, _prompt: &str) -> Result<Completion, BackendError> {
        Err(BackendError::RemoteDisabled)
    }
}

#[cfg(all(test, feature = "remote"))]
mod tests {
    use super::*;

    #[test]
    fn reads_text_and_usage() {
        let body = json!({
            "choices": [{ "message": { "role": "assistant", "content": "Search[Peoria]" } }],
            "usage": { "prompt_tokens": 120, "completion_tokens": 4, "total_tokens": 124 }
        });
        let completion = completion_from_response("p", &body).unwrap();
        assert_eq!(completion.text, "Search[Peoria]");
        assert_eq!(completion.usage, TokenUsage::new(120, 4));
        assert!(completion_from_response("p", &json!({"choices": []})).is_err());
    }

    #[test]
    fn missing_credential_refused() {
        let config = RemoteChatConfig {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            temperature: 0.0,
            api_key_env: "TDP_TEST_SURELY_UNSET_KEY".into(),
            timeout_secs: 1,
        };
        assert_eq!(
            RemoteChatBackend::from_env(config).unwrap_err(),
            BackendError::MissingCredential("TDP_TEST_SURELY_UNSET_KEY".into())
        );
    }
}
