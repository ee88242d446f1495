//! Completion backends: a deterministic scripted backend for offline runs
//! and tests, and a blocking JSON-over-HTTP chat client with bounded
//! retries.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::scripted::ScriptedFixtures;
use super::SynthError;
use crate::sim::SceneKind;

/// What a completion is for; the scripted backend dispatches on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Descriptions,
    Statechart,
    PrimaryFsm,
    Auxiliary,
    Iterator,
}

/// One completion request. `behavior_hint` carries the behavior text so the
/// scripted backend can pick a fixture; the HTTP backend only reads the
/// rendered prompts and temperature.
#[derive(Debug, Clone)]
pub struct PromptRequest {
    pub purpose: Purpose,
    pub scene: SceneKind,
    pub behavior_hint: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
}

pub trait CompletionBackend {
    fn complete(&mut self, req: &PromptRequest) -> Result<String, SynthError>;
    fn name(&self) -> &'static str;
}

/// Generation temperatures: near-deterministic for charts and machines,
/// looser for reward shaping.
pub const CHART_TEMPERATURE: f64 = 0.2;
pub const FSM_TEMPERATURE: f64 = 0.2;
pub const AUX_TEMPERATURE: f64 = 0.7;
pub const DESCRIPTION_TEMPERATURE: f64 = 0.7;

/// Maximum number of validation re-prompts per synthesis stage.
pub const MAX_VALIDATION_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpLlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth
    /// header.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Transport retries (exponential backoff), on top of validation
    /// retries.
    #[serde(default = "default_transport_retries")]
    pub transport_retries: u32,
    /// Base backoff in milliseconds, doubled per retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_api_key_env() -> String {
    "DRIVEGEN_API_KEY".to_string()
}
fn default_timeout() -> u64 {
    60
}
fn default_transport_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}

/// Blocking chat client: `POST endpoint {model, temperature, messages}`,
/// reading `choices[0].message.content`.
pub struct HttpLlm {
    pub config: HttpLlmConfig,
}

impl CompletionBackend for HttpLlm {
    fn complete(&mut self, req: &PromptRequest) -> Result<String, SynthError> {
        let body = json!({
            "model": self.config.model,
            "temperature": req.temperature,
            "messages": [
                { "role": "system", "content": req.system },
                { "role": "user", "content": req.user },
            ],
        });
        let mut last_err = String::new();
        for attempt in 0..=self.config.transport_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms << (attempt - 1),
                ));
            }
            let mut http = ureq::post(&self.config.endpoint)
                .timeout(Duration::from_secs(self.config.timeout_secs.max(1)));
            if let Ok(key) = std::env::var(&self.config.api_key_env) {
                http = http.set("Authorization", &format!("Bearer {key}"));
            }
            match http.send_json(body.clone()) {
                Ok(resp) => {
                    let value: serde_json::Value = resp.into_json().map_err(|e| {
                        SynthError::Backend(format!("unreadable chat response: {e}"))
                    })?;
                    return value["choices"][0]["message"]["content"]
                        .as_str()
                        .map(|s| s.to_string())
                        .ok_or_else(|| {
                            SynthError::Backend("chat response missing content".into())
                        });
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(SynthError::Backend(format!(
            "chat request failed after {} attempts: {last_err}",
            self.config.transport_retries + 1
        )))
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

impl CompletionBackend for ScriptedFixtures {
    fn complete(&mut self, req: &PromptRequest) -> Result<String, SynthError> {
        self.respond(req)
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

/// Extract the payload from a completion: the first fenced code block if one
/// exists (```toml preferred), otherwise the whole text.
pub fn extract_block(text: &str) -> &str {
    for marker in ["```toml", "```"] {
        if let Some(start) = text.find(marker) {
            let rest = &text[start + marker.len()..];
            if let Some(end) = rest.find("```") {
                return rest[..end].trim();
            }
        }
    }
    text.trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_block_prefers_toml_fence() {
        let text = "reasoning...\n```toml\n[aux]\nx = 1\n```\ntrailer";
        assert_eq!(extract_block(text), "[aux]\nx = 1");
        let plain = "no fences at all";
        assert_eq!(extract_block(plain), plain);
        let bare = "before\n```\ncontent\n```";
        assert_eq!(extract_block(bare), "content");
    }

    #[test]
    fn http_backend_round_trips_against_stub_server() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let n = stream.read(&mut buf).unwrap();
            let request = String::from_utf8_lossy(&buf[..n]).to_string();
            let body = serde_json::json!({
                "choices": [{ "message": { "content": "```toml\nverdict = \"keep\"\n```" } }]
            })
            .to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
            request
        });

        let mut backend = HttpLlm {
            config: HttpLlmConfig {
                endpoint: format!("http://{addr}/v1/chat/completions"),
                model: "test-model".into(),
                api_key_env: "DRIVEGEN_TEST_KEY_UNSET".into(),
                timeout_secs: 5,
                transport_retries: 0,
                backoff_ms: 1,
            },
        };
        let req = PromptRequest {
            purpose: Purpose::Iterator,
            scene: SceneKind::Merge,
            behavior_hint: "late merge".into(),
            system: "sys".into(),
            user: "usr".into(),
            temperature: 0.7,
        };
        let content = backend.complete(&req).unwrap();
        assert_eq!(extract_block(&content), "verdict = \"keep\"");

        let request = server.join().unwrap();
        assert!(request.contains("\"model\":\"test-model\""));
        assert!(request.contains("\"temperature\":0.7"));
        assert!(request.contains("\"role\":\"system\""));
    }

    #[test]
    fn http_backend_reports_failure_after_retries() {
        // Nothing listens on this port after the listener drops.
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut backend = HttpLlm {
            config: HttpLlmConfig {
                endpoint: format!("http://{addr}/v1/chat/completions"),
                model: "m".into(),
                api_key_env: "DRIVEGEN_TEST_KEY_UNSET".into(),
                timeout_secs: 1,
                transport_retries: 2,
                backoff_ms: 1,
            },
        };
        let req = PromptRequest {
            purpose: Purpose::Statechart,
            scene: SceneKind::Merge,
            behavior_hint: String::new(),
            system: String::new(),
            user: String::new(),
            temperature: 0.2,
        };
        let err = backend.complete(&req).unwrap_err();
        assert!(matches!(err, SynthError::Backend(msg) if msg.contains("3 attempts")));
    }
}
