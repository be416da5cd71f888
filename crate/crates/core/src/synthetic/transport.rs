//! Chat-completion transports: live OpenAI-compatible HTTP, fixture replay and a
//! deterministic mock.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, substream};
use crate::survey::PartyMean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Body of a chat-completions request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Identifies one generated cell; transports that do not need it ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub party: String,
    pub question_id: usize,
    pub temperature: f64,
    pub trial: usize,
}

impl CellKey {
    fn lookup_key(&self) -> (String, usize, u64, usize) {
        (self.party.clone(), self.question_id, self.temperature.to_bits(), self.trial)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Credentials rejected; the run must stop.
    Auth(String),
    /// Worth retrying (rate limit, server error, timeout).
    Retryable(String),
    /// Will fail again; the cell becomes missing.
    Fatal(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Auth(m) => write!(f, "authentication: {m}"),
            TransportError::Retryable(m) => write!(f, "retryable: {m}"),
            TransportError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest, key: &CellKey) -> Result<String, TransportError>;
}

/// OpenAI-compatible `POST {endpoint}/chat/completions`.
pub struct HttpTransport {
    url: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Appends `/chat/completions` unless the endpoint already names it.
pub fn completions_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else {
        format!("{base}/chat/completions")
    }
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key: String, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: completions_url(endpoint),
            api_key,
            agent,
        }
    }

    /// Reads the API key from `env_var`.
    pub fn from_env(endpoint: &str, env_var: &str, timeout: Duration) -> Result<Self> {
        let key = std::env::var(env_var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Auth(format!("environment variable {env_var} is not set")))?;
        Ok(Self::new(endpoint, key, timeout))
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest, _key: &CellKey) -> Result<String, TransportError> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(TransportError::Auth(format!("HTTP {status}"))),
            408 | 409 | 429 | 500..=599 => return Err(TransportError::Retryable(format!("HTTP {status}"))),
            _ => return Err(TransportError::Fatal(format!("HTTP {status}"))),
        }
        let body: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Fatal(format!("malformed response: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| TransportError::Fatal("response has no choices".into()))
    }
}

/// Replies sampled around known party profiles.
///
/// Each reply is `round(100 * clip(mean + e, 0, 1))` with
/// `e ~ N(0, noise_std * temperature)`, drawn from a substream keyed by the
/// cell, so replies do not depend on request order.
pub struct MockTransport {
    profiles: HashMap<String, Vec<f64>>,
    noise_std: f64,
    seed: u64,
}

impl MockTransport {
    pub fn new(party_profiles: &[PartyMean], noise_std: f64, seed: u64) -> Result<Self> {
        if !(noise_std >= 0.0) {
            return Err(Error::Input(format!("noise_std must be non-negative, got {noise_std}")));
        }
        let profiles = party_profiles
            .iter()
            .map(|p| Ok((p.party.clone(), p.complete_mean()?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            profiles,
            noise_std,
            seed,
        })
    }

    fn party_code(party: &str) -> u64 {
        derive_seed(0, party, &[])
    }
}

impl Transport for MockTransport {
    fn complete(&self, request: &ChatRequest, key: &CellKey) -> Result<String, TransportError> {
        let profile = self
            .profiles
            .get(&key.party)
            .ok_or_else(|| TransportError::Fatal(format!("no profile for party {:?}", key.party)))?;
        let mean = *profile
            .get(key.question_id)
            .ok_or_else(|| TransportError::Fatal(format!("question {} outside profile", key.question_id)))?;
        let sd = self.noise_std * request.temperature;
        let eps = if sd > 0.0 {
            let mut rng = substream(
                self.seed,
                "mock-llm",
                &[Self::party_code(&key.party), key.question_id as u64, key.temperature.to_bits(), key.trial as u64],
            );
            Normal::new(0.0, sd).expect("finite sd").sample(&mut rng)
        } else {
            0.0
        };
        Ok(format!("{}", (100.0 * (mean + eps).clamp(0.0, 1.0)).round() as i64))
    }
}

/// One request/response exchange as stored in a fixture log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub party: String,
    pub question_id: usize,
    pub temperature: f64,
    pub trial: usize,
    pub request: ChatRequest,
    /// `None` when the transport gave up on this cell.
    pub response: Option<String>,
    pub parsed: Option<f64>,
}

pub fn write_fixtures(path: impl AsRef<Path>, records: &[FixtureRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_fixtures(path: impl AsRef<Path>) -> Result<Vec<FixtureRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::load(path, "open", e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line?;
            serde_json::from_str(&line).map_err(|e| Error::load(path, format!("line {}", i + 1), e))
        })
        .collect()
}

/// Serves responses recorded in a fixture log.
pub struct ReplayTransport {
    responses: HashMap<(String, usize, u64, usize), Option<String>>,
}

impl ReplayTransport {
    pub fn new(records: Vec<FixtureRecord>) -> Self {
        let responses = records
            .into_iter()
            .map(|r| {
                let key = CellKey {
                    party: r.party,
                    question_id: r.question_id,
                    temperature: r.temperature,
                    trial: r.trial,
                };
                (key.lookup_key(), r.response)
            })
            .collect();
        Self { responses }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(read_fixtures(path)?))
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, _request: &ChatRequest, key: &CellKey) -> Result<String, TransportError> {
        match self.responses.get(&key.lookup_key()) {
            Some(Some(text)) => Ok(text.clone()),
            Some(None) => Err(TransportError::Fatal("recorded as failed".into())),
            None => Err(TransportError::Fatal(format!(
                "no recorded response for {} q{} T={} trial {}",
                key.party, key.question_id, key.temperature, key.trial
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(party: &str, q: usize, t: f64, trial: usize) -> CellKey {
        CellKey {
            party: party.into(),
            question_id: q,
            temperature: t,
            trial,
        }
    }

    fn req(t: f64) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![],
            temperature: t,
        }
    }

    fn profile(party: &str, mean: Vec<f64>) -> PartyMean {
        PartyMean {
            party: party.into(),
            per_question_std: vec![Some(0.0); mean.len()],
            mean: mean.into_iter().map(Some).collect(),
            count: 1,
        }
    }

    #[test]
    fn url_building() {
        assert_eq!(completions_url("https://api.openai.com/v1/"), "https://api.openai.com/v1/chat/completions");
        assert_eq!(completions_url("http://x/v1/chat/completions"), "http://x/v1/chat/completions");
    }

    #[test]
    fn mock_zero_noise_reproduces_profiles() {
        let m = MockTransport::new(&[profile("SP", vec![0.25, 0.9])], 0.0, 1).unwrap();
        assert_eq!(m.complete(&req(1.5), &key("SP", 0, 1.5, 0)).unwrap(), "25");
        assert_eq!(m.complete(&req(1.5), &key("SP", 1, 1.5, 3)).unwrap(), "90");
        assert!(matches!(m.complete(&req(1.0), &key("XX", 0, 1.0, 0)), Err(TransportError::Fatal(_))));
    }

    #[test]
    fn mock_is_deterministic_and_scales_with_temperature() {
        let m = MockTransport::new(&[profile("A", vec![0.5])], 0.1, 42).unwrap();
        let again = MockTransport::new(&[profile("A", vec![0.5])], 0.1, 42).unwrap();
        for trial in 0..20 {
            assert_eq!(
                m.complete(&req(2.0), &key("A", 0, 2.0, trial)).unwrap(),
                again.complete(&req(2.0), &key("A", 0, 2.0, trial)).unwrap()
            );
        }
        // Empirical std across 1,000 trials at T=2 should be 0.2 (noise 0.1 * T).
        let vals: Vec<f64> = (0..1000)
            .map(|trial| m.complete(&req(2.0), &key("A", 0, 2.0, trial)).unwrap().parse::<f64>().unwrap() / 100.0)
            .collect();
        let mu = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((sd - 0.2).abs() < 0.02, "sd = {sd}");
    }

    #[test]
    fn replay_serves_recorded_cells() {
        let rec = FixtureRecord {
            party: "SP".into(),
            question_id: 2,
            temperature: 1.25,
            trial: 4,
            request: req(1.25),
            response: Some("60".into()),
            parsed: Some(0.6),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        write_fixtures(&path, &[rec.clone()]).unwrap();
        assert_eq!(read_fixtures(&path).unwrap(), vec![rec]);
        let r = ReplayTransport::from_file(&path).unwrap();
        assert_eq!(r.complete(&req(1.25), &key("SP", 2, 1.25, 4)).unwrap(), "60");
        assert!(r.complete(&req(1.25), &key("SP", 2, 1.25, 5)).is_err());
    }
}
