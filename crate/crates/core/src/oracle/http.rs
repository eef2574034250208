use std::time::Duration;

use serde_json::{json, Value};

use super::{OracleClient, OracleRequest};
use crate::error::{LaftError, Result};

pub const ENDPOINT_ENV: &str = "LAFT_LLM_ENDPOINT";
pub const API_KEY_ENV: &str = "LAFT_LLM_API_KEY";

/// Chat-completion style endpoint: POSTs `{"model", "messages", "temperature": 0}`
/// and reads `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpOracle {
    endpoint: String,
    api_key: Option<String>,
    model_id: String,
    agent: ureq::Agent,
}

impl HttpOracle {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model_id: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpOracle {
            endpoint: endpoint.into(),
            api_key,
            model_id: model_id.into(),
            agent,
        }
    }

    pub fn from_env(model_id: impl Into<String>) -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| LaftError::Config(format!("{ENDPOINT_ENV} is not set")))?;
        let api_key = std::env::var(API_KEY_ENV).ok();
        Ok(Self::new(endpoint, api_key, model_id))
    }
}

impl OracleClient for HttpOracle {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, req: &OracleRequest<'_>) -> Result<String> {
        let body = json!({
            "model": self.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": 0,
        });
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| LaftError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LaftError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LaftError::Transport(format!("HTTP {status}: {text}")));
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| LaftError::Transport(format!("response is not JSON: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LaftError::Transport("response lacks choices[0].message.content".into()))
    }
}
