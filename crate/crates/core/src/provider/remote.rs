//! HTTP client for a remote model server speaking the JSON wire protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::{EmbeddingVector, Provider, ProviderRole};

/// Env var forwarded as a bearer header on every request.
pub const TOKEN_ENV_VAR: &str = "WKM_REMOTE_TOKEN";

pub struct RemoteProvider {
    role: ProviderRole,
    base_url: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    role: ProviderRole,
    prompt: &'a str,
    max_chars: usize,
    temperature: f64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    prompt: &'a str,
    actions: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl RemoteProvider {
    pub fn new(role: ProviderRole, base_url: impl Into<String>) -> Self {
        RemoteProvider {
            role,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        endpoint: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{endpoint}", self.base_url);
        let mut req = self.agent.post(&url);
        if let Ok(token) = std::env::var(TOKEN_ENV_VAR) {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| Error::Transport(format!("{url}: bad response body: {e}")))
    }
}

impl Provider for RemoteProvider {
    fn role(&self) -> ProviderRole {
        self.role
    }

    fn generate(&self, prompt: &str, max_chars: usize, temperature: f64) -> Result<String> {
        let resp: GenerateResponse = self.post(
            "/v1/generate",
            &GenerateRequest {
                role: self.role,
                prompt,
                max_chars,
                temperature,
            },
        )?;
        Ok(resp.text)
    }

    fn score_actions(&self, prompt: &str, actions: &[String]) -> Result<Vec<f64>> {
        let resp: ScoreResponse = self.post("/v1/score_actions", &ScoreRequest { prompt, actions })?;
        Ok(resp.scores)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let resp: EmbedResponse = self.post("/v1/embed", &EmbedRequest { text })?;
        Ok(EmbeddingVector::new(resp.vector))
    }
}
