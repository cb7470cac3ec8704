//! OpenAI-compatible chat-completions adapter.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::provider::{Provider, ProviderFailure, ProviderProfile, ProviderReply, ProviderRequest, Role};

pub struct HttpChatProvider {
    profile: ProviderProfile,
    client: reqwest::blocking::Client,
}

impl HttpChatProvider {
    pub fn new(profile: ProviderProfile, timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| e.to_string())?;
        Ok(Self { profile, client })
    }

    fn credential(&self) -> Result<Option<String>, ProviderFailure> {
        match &self.profile.credential_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ProviderFailure::Permanent(format!("credential variable {var} is not set"))),
        }
    }

    fn body(&self, request: &ProviderRequest<'_>) -> Value {
        let last = request.messages.len().saturating_sub(1);
        let messages: Vec<Value> = request
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let role = match m.role {
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                if i == last && !request.attachments.is_empty() {
                    let mut parts = vec![json!({"type": "text", "text": m.content})];
                    for a in request.attachments {
                        let data = base64::engine::general_purpose::STANDARD.encode(&a.bytes);
                        parts.push(json!({
                            "type": "file",
                            "file": {"filename": a.name(), "file_data": format!("data:{};base64,{data}", a.media_type)}
                        }));
                    }
                    json!({"role": role, "content": parts})
                } else {
                    json!({"role": role, "content": m.content})
                }
            })
            .collect();
        let mut body = json!({"messages": messages});
        if let Some(model) = &self.profile.model {
            body["model"] = json!(model);
        }
        body
    }
}

impl Provider for HttpChatProvider {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn send(&self, request: ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        let url = format!("{}/chat/completions", self.profile.endpoint.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(&self.body(&request));
        if let Some(key) = self.credential()? {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderFailure::Transient(e.without_url().to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(ProviderFailure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderFailure::Permanent(format!("HTTP {status}")));
        }
        let value: Value = resp.json().map_err(|e| ProviderFailure::Permanent(format!("bad response body: {e}")))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ProviderFailure::Permanent("response has no choices[0].message.content".into()))?
            .to_owned();
        let model_version = value["model"].as_str().filter(|m| !m.is_empty()).map(str::to_owned);
        Ok(ProviderReply { text, model_version })
    }
}
