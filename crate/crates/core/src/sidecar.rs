//! Client for the model sidecar.
//!
//! Wire protocol (JSON bodies, one object per request and response):
//!
//! | Endpoint          | Request                                              | Response                                   |
//! | ----------------- | ---------------------------------------------------- | ------------------------------------------ |
//! | `POST /fill_mask` | `{model, text, k}`                                   | `{model, candidates: [{text, score}]}`     |
//! | `POST /embed`     | `{model, text}`                                      | `{model, embedding: [f64]}`                |
//! | `POST /generate`  | `{model, source, beam_width, max_candidates}`        | `{model, candidates: [{text, score}]}`     |
//! | `GET /healthz`    |                                                      | any 2xx                                    |
//!
//! Responses must echo the requested model identifier and carry finite
//! scores; candidates are re-sorted by descending score on arrival.

use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::control_tokens::{EmbedError, EmbeddingProvider};
use crate::generation::{BackendError, BackendKind, CandidateGenerator, FillMaskClient, GenerationRequest};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FillMaskRequest {
    pub model: String,
    pub text: String,
    pub k: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbedRequest {
    pub model: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GenerateRequest {
    pub model: String,
    pub source: String,
    pub beam_width: usize,
    pub max_candidates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScoredCandidate {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CandidatesResponse {
    pub model: String,
    pub candidates: Vec<ScoredCandidate>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EmbedResponse {
    pub model: String,
    pub embedding: Vec<f64>,
}

/// Blocking HTTP client for one sidecar base URL.
#[derive(Clone)]
pub struct SidecarClient {
    base_url: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for SidecarClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarClient")
            .field("base_url", &self.base_url)
            .finish()
    }
}

impl SidecarClient {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        SidecarClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn backend_name(&self, model: &str) -> String {
        format!("{model}@{}", self.base_url)
    }

    fn map_error(&self, model: &str, err: ureq::Error) -> BackendError {
        let backend = self.backend_name(model);
        match err {
            ureq::Error::StatusCode(code) => BackendError::Failed {
                backend,
                message: format!("HTTP status {code}"),
            },
            ureq::Error::Io(_)
            | ureq::Error::ConnectionFailed
            | ureq::Error::HostNotFound
            | ureq::Error::Timeout(_) => BackendError::Unavailable {
                backend,
                message: err.to_string(),
            },
            other => BackendError::Failed {
                backend,
                message: other.to_string(),
            },
        }
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        model: &str,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{path}", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| self.map_error(model, e))?;
        response
            .body_mut()
            .read_json::<Resp>()
            .map_err(|e| BackendError::Failed {
                backend: self.backend_name(model),
                message: format!("malformed response: {e}"),
            })
    }

    fn check_model(&self, requested: &str, echoed: &str) -> Result<(), BackendError> {
        if requested != echoed {
            return Err(BackendError::Failed {
                backend: self.backend_name(requested),
                message: format!("response is for model {echoed:?}"),
            });
        }
        Ok(())
    }

    fn checked_candidates(
        &self,
        model: &str,
        response: CandidatesResponse,
    ) -> Result<Vec<ScoredCandidate>, BackendError> {
        self.check_model(model, &response.model)?;
        let mut candidates = response.candidates;
        if let Some(bad) = candidates.iter().find(|c| !c.score.is_finite()) {
            return Err(BackendError::Failed {
                backend: self.backend_name(model),
                message: format!("non-finite score for {:?}", bad.text),
            });
        }
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(candidates)
    }

    pub fn health(&self) -> Result<(), BackendError> {
        self.agent
            .get(&format!("{}/healthz", self.base_url))
            .call()
            .map(|_| ())
            .map_err(|e| self.map_error("healthz", e))
    }

    pub fn fill_mask(&self, model: &str, text: &str, k: usize) -> Result<Vec<ScoredCandidate>, BackendError> {
        let body = FillMaskRequest {
            model: model.to_string(),
            text: text.to_string(),
            k,
        };
        let response: CandidatesResponse = self.post(model, "/fill_mask", &body)?;
        self.checked_candidates(model, response)
    }

    pub fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, BackendError> {
        let body = EmbedRequest {
            model: model.to_string(),
            text: text.to_string(),
        };
        let response: EmbedResponse = self.post(model, "/embed", &body)?;
        self.check_model(model, &response.model)?;
        if response.embedding.is_empty() || response.embedding.iter().any(|x| !x.is_finite()) {
            return Err(BackendError::Failed {
                backend: self.backend_name(model),
                message: "empty or non-finite embedding".into(),
            });
        }
        Ok(response.embedding)
    }

    pub fn generate(
        &self,
        model: &str,
        source: &str,
        beam_width: usize,
        max_candidates: usize,
    ) -> Result<Vec<ScoredCandidate>, BackendError> {
        let body = GenerateRequest {
            model: model.to_string(),
            source: source.to_string(),
            beam_width,
            max_candidates,
        };
        let response: CandidatesResponse = self.post(model, "/generate", &body)?;
        let mut candidates = self.checked_candidates(model, response)?;
        candidates.truncate(beam_width);
        Ok(candidates)
    }
}

/// A fill-mask model served by the sidecar.
#[derive(Debug, Clone)]
pub struct SidecarFillMask {
    client: SidecarClient,
    model: String,
}

impl SidecarFillMask {
    pub fn new(client: SidecarClient, model: &str) -> Self {
        SidecarFillMask {
            client,
            model: model.to_string(),
        }
    }
}

impl FillMaskClient for SidecarFillMask {
    fn id(&self) -> String {
        self.model.clone()
    }

    fn fill_mask(&self, text: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError> {
        Ok(self
            .client
            .fill_mask(&self.model, text, k)?
            .into_iter()
            .map(|c| (c.text, c.score))
            .collect())
    }
}

/// A fine-tuned seq2seq checkpoint served by the sidecar.
#[derive(Debug, Clone)]
pub struct SidecarSeq2Seq {
    client: SidecarClient,
    model: String,
}

impl SidecarSeq2Seq {
    pub fn new(client: SidecarClient, model: &str) -> Self {
        SidecarSeq2Seq {
            client,
            model: model.to_string(),
        }
    }
}

impl CandidateGenerator for SidecarSeq2Seq {
    fn id(&self) -> String {
        self.model.clone()
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteSeq2seq
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, BackendError> {
        Ok(self
            .client
            .generate(&self.model, request.source, request.beam_width, request.beam_width)?
            .into_iter()
            .map(|c| c.text)
            .collect())
    }
}

/// Sentence embeddings from the sidecar. The dimension is fixed by the first
/// response; later responses of another size are rejected.
#[derive(Debug)]
pub struct SidecarEmbedder {
    client: SidecarClient,
    model: String,
    dimension: OnceLock<usize>,
}

impl SidecarEmbedder {
    pub fn new(client: SidecarClient, model: &str) -> Self {
        SidecarEmbedder {
            client,
            model: model.to_string(),
            dimension: OnceLock::new(),
        }
    }
}

impl EmbeddingProvider for SidecarEmbedder {
    fn backend_id(&self) -> &str {
        &self.model
    }

    /// 0 until the first successful call.
    fn dimension(&self) -> usize {
        self.dimension.get().copied().unwrap_or(0)
    }

    fn embed(&self, sentence: &str) -> Result<Vec<f64>, EmbedError> {
        let to_embed_error = |message: String| EmbedError {
            backend: self.client.backend_name(&self.model),
            message,
        };
        let v = self
            .client
            .embed(&self.model, sentence)
            .map_err(|e| to_embed_error(e.to_string()))?;
        let expected = *self.dimension.get_or_init(|| v.len());
        if v.len() != expected {
            return Err(to_embed_error(format!(
                "dimension changed from {expected} to {}",
                v.len()
            )));
        }
        Ok(v)
    }
}
