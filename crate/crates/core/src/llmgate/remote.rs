//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionRequest, LlmError, Provider, ProviderError, ProviderId};

pub const API_KEY_ENV: &str = "VICHARA_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    #[default]
    User,
    System,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL up to and excluding `/chat/completions`.
    pub base_url: String,
    pub api_key: String,
    pub message_role: MessageRole,
    pub timeout: Duration,
}

pub struct RemoteProvider {
    config: RemoteConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    /// Reads the API key from `VICHARA_API_KEY`.
    pub fn from_env(
        base_url: String,
        message_role: MessageRole,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(LlmError::MissingCredentials(API_KEY_ENV))?;
        Ok(Self::new(RemoteConfig {
            base_url,
            api_key,
            message_role,
            timeout,
        }))
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

impl Provider for RemoteProvider {
    fn id(&self) -> ProviderId {
        ProviderId::RemoteOpenAiCompatible
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn call(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let role = match self.config.message_role {
            MessageRole::User => "user",
            MessageRole::System => "system",
        };
        let body = json!({
            "model": req.model_id,
            "messages": [{"role": role, "content": req.prompt}],
            "temperature": req.temperature,
            "seed": req.seed,
            "max_tokens": req.max_output,
        });
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(&body)
            .map_err(|e| ProviderError::Transient {
                status: None,
                message: e.to_string(),
            })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(ProviderError::Transient {
                status: Some(status),
                message,
            });
        }
        if !(200..300).contains(&status) {
            let message = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(LlmError::Remote { status, message }.into());
        }
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(|e| {
            ProviderError::Permanent(LlmError::Remote {
                status,
                message: format!("unparseable completion body: {e}"),
            })
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                LlmError::Remote {
                    status,
                    message: "completion has no message content".into(),
                }
                .into()
            })
    }
}
