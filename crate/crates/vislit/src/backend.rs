//! LLM backends: deterministic mocks, fixture replay and live HTTP.

use crate::error::{Error, Result};
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};
use vislit_core::qbank::QuestionInstance;
use vislit_core::runner::{estimate_tokens, mock_reply, BackendConfig, BackendKind, Prompt, Provider, TrialPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub text: String,
    pub latency_s: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallError {
    /// Worth retrying (rate limits, server errors, network failures).
    Transient(String),
    Permanent(String),
}

impl CallError {
    pub fn message(&self) -> &str {
        match self {
            CallError::Transient(m) | CallError::Permanent(m) => m,
        }
    }
}

pub trait Backend: Send + Sync {
    fn call(&self, plan: &TrialPlan, q: &QuestionInstance, prompt: &Prompt, image: Option<&[u8]>) -> std::result::Result<Reply, CallError>;

    /// Whether retry backoff and rate limits should wait in real time.
    fn real_time(&self) -> bool {
        true
    }
}

pub fn make_backend(cfg: &BackendConfig) -> Result<Box<dyn Backend>> {
    Ok(match cfg.kind {
        BackendKind::MockUniform | BackendKind::MockPerfect | BackendKind::MockKnowledge => Box::new(MockBackend { cfg: cfg.clone() }),
        BackendKind::Replay => Box::new(ReplayBackend::load(cfg)?),
        BackendKind::LiveHttp => Box::new(HttpBackend::new(cfg)?),
    })
}

pub struct MockBackend {
    cfg: BackendConfig,
}

impl Backend for MockBackend {
    fn call(&self, plan: &TrialPlan, q: &QuestionInstance, prompt: &Prompt, _image: Option<&[u8]>) -> std::result::Result<Reply, CallError> {
        let r = mock_reply(self.cfg.kind, &self.cfg, plan, q).ok_or_else(|| CallError::Permanent("not a mock backend".into()))?;
        Ok(Reply {
            prompt_tokens: estimate_tokens(&prompt.full_text()),
            completion_tokens: estimate_tokens(&r.text),
            text: r.text,
            latency_s: r.latency_s,
        })
    }

    fn real_time(&self) -> bool {
        false
    }
}

/// One recorded response. Trial record files can be used directly.
#[derive(Debug, Clone, Deserialize)]
pub struct Fixture {
    pub session_id: String,
    pub raw_response: String,
    #[serde(default)]
    pub latency_s: f64,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub error: Option<String>,
}

pub struct ReplayBackend {
    fixtures: HashMap<String, Fixture>,
}

impl ReplayBackend {
    pub fn load(cfg: &BackendConfig) -> Result<ReplayBackend> {
        let path = cfg.fixtures.as_deref().ok_or_else(|| Error::BackendUnavailable(format!("{}: no fixtures file configured", cfg.llm_id)))?;
        if !Path::new(path).exists() {
            return Err(Error::BackendUnavailable(format!("{}: fixtures file {path} not found", cfg.llm_id)));
        }
        let list: Vec<Fixture> = crate::io::read_jsonl(Path::new(path))?;
        Ok(ReplayBackend::from_fixtures(list))
    }

    pub fn from_fixtures(list: Vec<Fixture>) -> ReplayBackend {
        // Later lines win, so appending a corrected response overrides.
        let fixtures = list.into_iter().filter(|f| f.error.is_none()).map(|f| (f.session_id.clone(), f)).collect();
        ReplayBackend { fixtures }
    }
}

impl Backend for ReplayBackend {
    fn call(&self, plan: &TrialPlan, _q: &QuestionInstance, prompt: &Prompt, _image: Option<&[u8]>) -> std::result::Result<Reply, CallError> {
        let f = self.fixtures.get(&plan.session_id).ok_or_else(|| CallError::Permanent(format!("no fixture for {}", plan.session_id)))?;
        Ok(Reply {
            text: f.raw_response.clone(),
            latency_s: f.latency_s.max(0.0),
            prompt_tokens: if f.prompt_tokens > 0 { f.prompt_tokens } else { estimate_tokens(&prompt.full_text()) },
            completion_tokens: f.completion_tokens,
        })
    }

    fn real_time(&self) -> bool {
        false
    }
}

/// Chat endpoint with an image attachment, speaking one of the provider
/// wire formats. The API key is read from the environment at startup and
/// kept only in memory.
pub struct HttpBackend {
    cfg: BackendConfig,
    endpoint: String,
    key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<HttpBackend> {
        let endpoint = cfg
            .endpoint
            .clone()
            .filter(|e| !e.is_empty())
            .ok_or_else(|| Error::BackendUnavailable(format!("{}: live-http needs an endpoint", cfg.llm_id)))?;
        let key = match &cfg.api_key_env {
            Some(var) => std::env::var(var).map_err(|_| Error::BackendUnavailable(format!("{}: environment variable {var} is not set", cfg.llm_id)))?,
            None => String::new(),
        };
        let timeout = Duration::from_secs_f64(cfg.timeout_s.unwrap_or(600.0));
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(HttpBackend { cfg: cfg.clone(), endpoint, key, agent })
    }

    fn request(&self, prompt: &Prompt, image: Option<&[u8]>, model: &str) -> (String, Value) {
        let b64 = image.map(|b| base64::engine::general_purpose::STANDARD.encode(b));
        match self.cfg.provider {
            Provider::OpenAi => {
                // Question text first, then the image.
                let mut content = vec![json!({"type": "text", "text": prompt.user})];
                if let Some(d) = &b64 {
                    content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{d}")}}));
                }
                let body = json!({
                    "model": model,
                    "messages": [
                        {"role": "system", "content": prompt.system},
                        {"role": "user", "content": content},
                    ],
                });
                (self.endpoint.clone(), body)
            }
            Provider::Gemini => {
                let mut parts = vec![json!({"text": prompt.user})];
                if let Some(d) = &b64 {
                    parts.push(json!({"inline_data": {"mime_type": "image/png", "data": d}}));
                }
                let body = json!({
                    "system_instruction": {"parts": [{"text": prompt.system}]},
                    "contents": [{"role": "user", "parts": parts}],
                });
                (format!("{}/models/{}:generateContent", self.endpoint.trim_end_matches('/'), model), body)
            }
        }
    }
}

/// Pull (text, prompt tokens, completion tokens) out of a provider reply.
pub fn parse_reply(provider: Provider, v: &Value) -> Option<(String, u64, u64)> {
    match provider {
        Provider::OpenAi => {
            let text = v.pointer("/choices/0/message/content")?.as_str()?.to_string();
            let pt = v.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0);
            let ct = v.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0);
            Some((text, pt, ct))
        }
        Provider::Gemini => {
            let parts = v.pointer("/candidates/0/content/parts")?.as_array()?;
            let text: String = parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect();
            let pt = v.pointer("/usageMetadata/promptTokenCount").and_then(Value::as_u64).unwrap_or(0);
            let ct = v.pointer("/usageMetadata/candidatesTokenCount").and_then(Value::as_u64).unwrap_or(0);
            Some((text, pt, ct))
        }
    }
}

impl Backend for HttpBackend {
    fn call(&self, plan: &TrialPlan, _q: &QuestionInstance, prompt: &Prompt, image: Option<&[u8]>) -> std::result::Result<Reply, CallError> {
        let model = self.cfg.model_for(plan.condition.vis_present);
        let (url, body) = self.request(prompt, image, model);
        let mut req = self.agent.post(&url).set("Content-Type", "application/json");
        if !self.key.is_empty() {
            req = match self.cfg.provider {
                Provider::OpenAi => req.set("Authorization", &format!("Bearer {}", self.key)),
                Provider::Gemini => req.set("x-goog-api-key", &self.key),
            };
        }
        let start = Instant::now();
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", detail.chars().take(300).collect::<String>());
                return Err(if code == 429 || code >= 500 { CallError::Transient(msg) } else { CallError::Permanent(msg) });
            }
            Err(e) => return Err(CallError::Transient(e.to_string())),
        };
        let v: Value = resp.into_json().map_err(|e| CallError::Transient(format!("reading reply: {e}")))?;
        let latency_s = start.elapsed().as_secs_f64();
        let (text, pt, ct) = parse_reply(self.cfg.provider, &v).ok_or_else(|| CallError::Permanent(format!("unexpected reply shape: {}", v.to_string().chars().take(300).collect::<String>())))?;
        Ok(Reply { text, latency_s, prompt_tokens: pt, completion_tokens: ct })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_provider_replies() {
        let o = json!({"choices": [{"message": {"content": " (b) "}}], "usage": {"prompt_tokens": 12, "completion_tokens": 2}});
        assert_eq!(parse_reply(Provider::OpenAi, &o), Some((" (b) ".into(), 12, 2)));
        let g = json!({"candidates": [{"content": {"parts": [{"text": "(c)"}]}}], "usageMetadata": {"promptTokenCount": 30, "candidatesTokenCount": 1}});
        assert_eq!(parse_reply(Provider::Gemini, &g), Some(("(c)".into(), 30, 1)));
        assert_eq!(parse_reply(Provider::OpenAi, &json!({"error": "x"})), None);
    }

    #[test]
    fn live_backend_needs_key_variable() {
        let mut cfg = BackendConfig::mock(BackendKind::LiveHttp, "x", 0);
        cfg.endpoint = Some("http://127.0.0.1:9".into());
        cfg.api_key_env = Some("VISLIT_TEST_KEY_THAT_IS_NOT_SET".into());
        assert!(matches!(HttpBackend::new(&cfg), Err(Error::BackendUnavailable(_))));
    }
}
