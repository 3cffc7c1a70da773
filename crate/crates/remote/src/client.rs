use std::time::Duration;

use csd_core::model::check_start;
use csd_core::{Distribution, Error, LanguageModel, Result, TokenId, Vocab};
use serde::{Deserialize, Serialize};

use crate::wire::{ErrorBody, ScoreRequest, ScoreResponse, ServerInfo, ROW_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteModelSpec {
    /// Server root, e.g. `http://127.0.0.1:8080`.
    pub base_url: String,
    pub vocab_size: usize,
    pub cost_weight: f64,
    /// Per-request timeout.
    #[serde(with = "millis", rename = "timeout_ms")]
    pub timeout: Duration,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    /// Overrides the server-reported name in traces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl RemoteModelSpec {
    pub fn new(base_url: impl Into<String>, vocab_size: usize, cost_weight: f64) -> Self {
        RemoteModelSpec {
            base_url: base_url.into(),
            vocab_size,
            cost_weight,
            timeout: Duration::from_secs(30),
            retries: 2,
            name: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

enum Attempt {
    Done(String),
    /// Worth retrying: transport failure or 5xx.
    Transient(String),
    Fatal(Error),
}

fn exchange(spec: &RemoteModelSpec, agent: &ureq::Agent, path: &str, body: Option<&str>) -> Result<String> {
    let url = spec.url(path);
    let mut last = String::new();
    for _ in 0..=spec.retries {
        let sent = match body {
            Some(b) => agent
                .post(&url)
                .header("content-type", "application/json")
                .send(b),
            None => agent.get(&url).call(),
        };
        let attempt = match sent {
            Err(e) => Attempt::Transient(format!("{url}: {e}")),
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                match resp.body_mut().read_to_string() {
                    Err(e) => Attempt::Transient(format!("{url}: {e}")),
                    Ok(text) if (200..300).contains(&status) => Attempt::Done(text),
                    Ok(text) => {
                        let msg = serde_json::from_str::<ErrorBody>(&text)
                            .map(|b| b.error)
                            .unwrap_or(text);
                        if status >= 500 {
                            Attempt::Transient(format!("{url}: status {status}: {msg}"))
                        } else {
                            Attempt::Fatal(Error::contract(format!("{url}: server rejected request ({status}): {msg}")))
                        }
                    }
                }
            }
        };
        match attempt {
            Attempt::Done(text) => return Ok(text),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Transient(msg) => last = msg,
        }
    }
    Err(Error::RemoteUnavailable(format!(
        "{last} (gave up after {} attempts)",
        spec.retries + 1
    )))
}

fn fetch_info(spec: &RemoteModelSpec, agent: &ureq::Agent) -> Result<ServerInfo> {
    let text = exchange(spec, agent, "/v1/info", None)?;
    let info: ServerInfo = serde_json::from_str(&text)
        .map_err(|e| Error::Protocol { row: 0, message: format!("bad /v1/info body: {e}") })?;
    if info.vocab_size != spec.vocab_size {
        return Err(Error::Config(format!(
            "vocab size mismatch: spec expects {}, server {} reports {}",
            spec.vocab_size, info.name, info.vocab_size
        )));
    }
    Ok(info)
}

/// Queries `/v1/info` and checks the vocabulary size.
pub fn handshake(spec: &RemoteModelSpec) -> Result<ServerInfo> {
    fetch_info(spec, &spec.agent())
}

/// A language model scored over HTTP.
#[derive(Debug)]
pub struct RemoteModel {
    spec: RemoteModelSpec,
    info: ServerInfo,
    name: String,
    vocab: Vocab,
    agent: ureq::Agent,
}

impl RemoteModel {
    /// Handshakes and returns a ready model.
    pub fn connect(spec: RemoteModelSpec) -> Result<Self> {
        let agent = spec.agent();
        let info = fetch_info(&spec, &agent)?;
        let name = spec.name.clone().unwrap_or_else(|| info.name.clone());
        Ok(RemoteModel {
            vocab: Vocab::anonymous(spec.vocab_size),
            spec,
            info,
            name,
            agent,
        })
    }

    pub fn spec(&self) -> &RemoteModelSpec {
        &self.spec
    }

    pub fn info(&self) -> &ServerInfo {
        &self.info
    }
}

/// Scores `tokens` remotely; one distribution per position `start..=len + 1`.
pub fn remote_evaluate(model: &RemoteModel, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
    check_start(tokens, start)?;
    let request = ScoreRequest {
        tokens: tokens.iter().map(|t| t.0).collect(),
        start,
    };
    let body = serde_json::to_string(&request).expect("score request serializes");
    let text = exchange(&model.spec, &model.agent, "/v1/score", Some(&body))?;
    let response: ScoreResponse = serde_json::from_str(&text).map_err(|e| Error::Protocol {
        row: 0,
        message: format!("bad /v1/score body: {e}"),
    })?;
    let expected = tokens.len() + 2 - start;
    if response.dists.len() != expected {
        return Err(Error::Protocol {
            row: response.dists.len().min(expected),
            message: format!("expected {expected} rows, got {}", response.dists.len()),
        });
    }
    response
        .dists
        .into_iter()
        .enumerate()
        .map(|(row, probs)| check_row(row, probs, model.spec.vocab_size))
        .collect()
}

fn check_row(row: usize, probs: Vec<f64>, vocab_size: usize) -> Result<Distribution> {
    let bad = |message: String| Error::Protocol { row, message };
    if probs.len() != vocab_size {
        return Err(bad(format!("row has {} entries, vocab size is {vocab_size}", probs.len())));
    }
    if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(bad(format!("entry {i} is {}", probs[i])));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(bad(format!("row sums to {total}")));
    }
    // Rows already inside the distribution tolerance pass through bit-for-bit.
    Distribution::from_probs(probs.clone()).or_else(|_| Distribution::normalize(&probs))
}

impl LanguageModel for RemoteModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn descriptor(&self) -> &str {
        &self.name
    }

    fn cost_weight(&self) -> f64 {
        self.spec.cost_weight
    }

    fn evaluate(&self, tokens: &[TokenId], start: usize) -> Result<Vec<Distribution>> {
        remote_evaluate(self, tokens, start)
    }

    fn is_deterministic(&self) -> bool {
        self.info.deterministic
    }
}
