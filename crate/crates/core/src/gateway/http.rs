//! OpenAI-compatible chat-completions backend.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Backend;
use crate::error::{Error, Result};
use crate::prompt::{self, ChatMessage};
use crate::query::{ModelQuery, ModelReply, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Backend {
                backend: config.model.clone(),
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> std::result::Result<ChatResponse, String> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(format!("HTTP {status}: {}", text.chars().take(500).collect::<String>()));
        }
        resp.json::<ChatResponse>().map_err(|e| format!("bad response body: {e}"))
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.base_url)
    }

    fn complete(&self, query: &ModelQuery) -> Result<ModelReply> {
        let conversation = prompt::render(query)?;
        let body = ChatRequest {
            model: &self.config.model,
            messages: &conversation.messages,
            temperature: query.decoding.temperature,
            max_tokens: query.decoding.max_tokens,
            seed: query.decoding.seed,
        };
        let attempts = self.config.max_attempts.max(1);
        let mut last_err = String::new();
        for attempt in 1..=attempts {
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(resp) => {
                    let text = resp
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .unwrap_or_default();
                    return Ok(ModelReply {
                        text,
                        latency_ms: started.elapsed().as_secs_f64() * 1e3,
                        token_usage: resp.usage.map(|u| TokenUsage {
                            prompt_tokens: u.prompt_tokens,
                            completion_tokens: u.completion_tokens,
                        }),
                        backend_id: self.id(),
                    });
                }
                Err(e) => {
                    tracing::warn!(attempt, "chat completion failed: {e}");
                    last_err = e;
                    if attempt < attempts {
                        std::thread::sleep(Duration::from_millis(
                            self.config.backoff_ms << (attempt - 1),
                        ));
                    }
                }
            }
        }
        Err(Error::Backend {
            backend: self.id(),
            attempts,
            message: last_err,
        })
    }
}
