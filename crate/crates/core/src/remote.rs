//! HTTP clients for the fill-mask service: `/fill`, `/tag` and `/health`.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::augment::{FillCandidate, MaskFiller, MaskQuery};
use crate::corpus::{Pos, TaggedToken, Tagger};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillRequest {
    pub text: String,
    pub top_k: usize,
    pub placeholder: String,
    /// The masked surface; lexicon mode looks its synonyms up by it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceMode {
    Lm,
    Lexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillResponse {
    pub candidates: Vec<FillCandidate>,
    pub model_id: String,
    pub mode: ServiceMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireTag {
    pub surface: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub mode: ServiceMode,
    #[serde(default)]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(200),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Blocking JSON client with exponential backoff. Connection failures and
/// 5xx responses are retried; 4xx responses are not.
#[derive(Debug, Clone)]
pub struct ServiceClient {
    base_url: String,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
}

fn transport(context: &str, message: impl ToString) -> Error {
    Error::Transport { context: context.to_string(), message: message.to_string() }
}

fn malformed(context: &str, message: impl ToString) -> Error {
    Error::MalformedResponse { context: context.to_string(), message: message.to_string() }
}

impl ServiceClient {
    pub fn new(base_url: &str, retry: RetryPolicy) -> Result<Self> {
        if retry.attempts == 0 {
            return Err(Error::Config("retry attempts must be >= 1".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(retry.timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(ServiceClient { base_url: base_url.trim_end_matches('/').to_string(), http, retry })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn send<B: Serialize>(&self, path: &str, body: Option<&B>) -> Result<String> {
        let url = format!("{}{path}", self.base_url);
        let mut last = None;
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            let req = match body {
                Some(b) => self.http.post(&url).json(b),
                None => self.http.get(&url),
            };
            match req.send() {
                Err(e) => last = Some(transport(path, e)),
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().map_err(|e| transport(path, e))?;
                    if status.is_success() {
                        return Ok(text);
                    }
                    let err = transport(path, format!("HTTP {status}: {}", text.trim()));
                    if !status.is_server_error() {
                        return Err(err);
                    }
                    last = Some(err);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn health(&self) -> Result<Health> {
        let body = self.send::<()>("/health", None)?;
        serde_json::from_str(&body).map_err(|e| malformed("/health", e))
    }

    pub fn fill(&self, req: &FillRequest) -> Result<FillResponse> {
        let body = self.send("/fill", Some(req))?;
        let resp: FillResponse = serde_json::from_str(&body).map_err(|e| malformed("/fill", e))?;
        validate_fill(req, &resp)?;
        Ok(resp)
    }

    pub fn tag(&self, text: &str) -> Result<Vec<WireTag>> {
        let body = self.send("/tag", Some(&TagRequest { text: text.to_string() }))?;
        serde_json::from_str(&body).map_err(|e| malformed("/tag", e))
    }
}

/// Checks the response invariants the augmenter relies on.
pub fn validate_fill(req: &FillRequest, resp: &FillResponse) -> Result<()> {
    let c = &resp.candidates;
    if c.len() > req.top_k {
        return Err(malformed("/fill", format!("{} candidates for top_k {}", c.len(), req.top_k)));
    }
    if c.windows(2).any(|w| w[1].score > w[0].score) {
        return Err(malformed("/fill", "candidate scores are not non-increasing"));
    }
    let mut seen = HashSet::new();
    for cand in c {
        if !seen.insert(cand.token.as_str()) {
            return Err(malformed("/fill", format!("duplicate candidate {:?}", cand.token)));
        }
        if cand.token.contains(&req.placeholder) || cand.token.trim().is_empty() {
            return Err(malformed("/fill", format!("invalid candidate {:?}", cand.token)));
        }
    }
    Ok(())
}

/// Restores byte offsets by locating each surface left to right.
pub fn align_tags(text: &str, tags: Vec<WireTag>) -> Result<Vec<TaggedToken>> {
    let mut cursor = 0;
    tags.into_iter()
        .enumerate()
        .map(|(index, t)| {
            let start = text[cursor..]
                .find(&t.surface)
                .map(|o| cursor + o)
                .filter(|_| !t.surface.is_empty())
                .ok_or_else(|| malformed("/tag", format!("token {:?} not found in text", t.surface)))?;
            cursor = start + t.surface.len();
            Ok(TaggedToken { surface: t.surface, pos: t.pos, index, start, end: cursor })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RemoteTagger {
    client: ServiceClient,
    version: String,
}

impl RemoteTagger {
    /// Probes `/health` so the version reflects the serving model.
    pub fn connect(client: ServiceClient) -> Result<Self> {
        let h = client.health()?;
        let version = format!("remote:{}:{}", serde_json::to_value(h.mode).map_err(|e| malformed("/health", e))?.as_str().unwrap_or("?"), h.model_id.unwrap_or_default());
        Ok(RemoteTagger { client, version })
    }
}

impl Tagger for RemoteTagger {
    fn tag(&self, text: &str) -> Result<Vec<TaggedToken>> {
        if text.trim().is_empty() {
            return Err(Error::contract("cannot tag empty text"));
        }
        align_tags(text, self.client.tag(text)?)
    }

    fn version(&self) -> String {
        self.version.clone()
    }
}

#[derive(Debug, Clone)]
pub struct RemoteFiller {
    client: ServiceClient,
    id: String,
}

impl RemoteFiller {
    pub fn connect(client: ServiceClient) -> Result<Self> {
        let h = client.health()?;
        let id = format!("remote:{}", h.model_id.unwrap_or_else(|| "unknown".into()));
        Ok(RemoteFiller { client, id })
    }
}

impl MaskFiller for RemoteFiller {
    fn fill(&self, q: &MaskQuery) -> Result<Vec<FillCandidate>> {
        let req = FillRequest {
            text: q.text_with_placeholder.clone(),
            top_k: q.top_k,
            placeholder: q.placeholder.clone(),
            source: Some(q.pivot.surface.clone()),
        };
        Ok(self.client.fill(&req)?.candidates)
    }

    fn id(&self) -> String {
        self.id.clone()
    }
}
