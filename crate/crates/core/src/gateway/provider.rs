//! The single contract every model adapter implements.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::types::ProviderId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    pub attachments: bool,
    pub browsing: bool,
}

/// Static description of a provider. Holds the *name* of the credential
/// variable, never its value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub id: ProviderId,
    /// Base URL of an OpenAI-compatible API, or a fixture locator for mocks.
    pub endpoint: String,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub capabilities: Capabilities,
    /// Version label recorded when the provider does not report one.
    #[serde(default)]
    pub version_label: Option<String>,
}

/// Label for providers that route queries across undisclosed models.
pub const UNDISCLOSED_MODEL: &str = "undisclosed-routed";

impl ProviderProfile {
    pub fn mock(id: impl Into<ProviderId>) -> Self {
        Self {
            id: id.into(),
            endpoint: "mock://".into(),
            credential_env: None,
            model: None,
            capabilities: Capabilities { attachments: true, browsing: false },
            version_label: Some("mock-1".into()),
        }
    }
}

/// A document sent alongside a prompt. Bytes are opaque to the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub path: PathBuf,
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl Attachment {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let bytes = std::fs::read(&path)?;
        let media_type = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pdf") => "application/pdf",
            Some("txt") => "text/plain",
            Some("html" | "htm") => "text/html",
            _ => "application/octet-stream",
        }
        .to_owned();
        Ok(Self { path, media_type, bytes })
    }

    pub fn name(&self) -> String {
        self.path.file_name().map_or_else(|| self.path.display().to_string(), |n| n.to_string_lossy().into_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Everything an adapter needs for one call.
#[derive(Debug, Clone, Copy)]
pub struct ProviderRequest<'a> {
    pub session_id: &'a str,
    /// Zero-based index of this prompt within the session.
    pub turn: usize,
    /// Prior turns followed by the new prompt.
    pub messages: &'a [ChatMessage],
    pub attachments: &'a [Attachment],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    /// Model label the provider reported for this response, if any.
    pub model_version: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    /// Worth retrying: timeouts, rate limits, server errors.
    Transient(String),
    Permanent(String),
}

pub trait Provider: Send + Sync {
    fn profile(&self) -> &ProviderProfile;

    fn send(&self, request: ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure>;

    /// Label captured when a session opens.
    fn model_version(&self) -> String {
        let p = self.profile();
        p.version_label.clone().or_else(|| p.model.clone()).unwrap_or_else(|| UNDISCLOSED_MODEL.to_owned())
    }
}
