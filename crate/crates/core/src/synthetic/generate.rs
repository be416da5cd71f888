use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompts, parse_llm_reply};
use super::transport::{CellKey, ChatMessage, ChatRequest, FixtureRecord, Transport, TransportError};
use crate::error::{Error, Result};
use crate::survey::{Answer, Questionnaire, Respondent, RespondentKind, ResponseMatrix};

/// Temperatures swept by the default generation protocol.
pub const DEFAULT_TEMPERATURES: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];
/// Trials per (party, temperature) in the default protocol.
pub const DEFAULT_REPS_PER_TEMPERATURE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_initial: Duration,
    /// Upper bound on requests in flight.
    pub concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 1.0,
            timeout: Duration::from_secs(60),
            max_retries: 5,
            backoff_initial: Duration::from_secs(1),
            concurrency: 4,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub party: String,
    pub temperature: f64,
    pub trial_index: usize,
    pub answers: Vec<Answer>,
}

impl SyntheticSample {
    /// Row id encoding party, temperature and trial: `SP_T1.25_3`.
    pub fn row_id(&self) -> String {
        format!("{}_T{}_{}", self.party, self.temperature, self.trial_index)
    }
}

/// Inverse of [`SyntheticSample::row_id`]: `(party, temperature, trial)`.
pub fn parse_row_id(id: &str) -> Option<(String, f64, usize)> {
    let mut parts = id.rsplitn(3, '_');
    let trial = parts.next()?.parse().ok()?;
    let temperature = parts.next()?.strip_prefix('T')?.parse().ok()?;
    let party = parts.next()?.to_string();
    Some((party, temperature, trial))
}

pub fn samples_to_matrix(samples: &[SyntheticSample], n_questions: usize) -> Result<ResponseMatrix> {
    let mut m = ResponseMatrix::empty(n_questions);
    for s in samples {
        m.push(
            Respondent {
                id: s.row_id(),
                kind: RespondentKind::Synthetic,
                party: Some(s.party.clone()),
            },
            s.answers.clone(),
        )?;
    }
    Ok(m)
}

/// Recovers samples from a matrix written by [`samples_to_matrix`].
pub fn matrix_to_samples(matrix: &ResponseMatrix) -> Result<Vec<SyntheticSample>> {
    matrix
        .respondents()
        .iter()
        .zip(matrix.rows())
        .map(|(r, row)| {
            let (party, temperature, trial_index) = parse_row_id(&r.id)
                .ok_or_else(|| Error::Input(format!("row id {:?} is not of the form PARTY_T<temp>_<trial>", r.id)))?;
            Ok(SyntheticSample {
                party,
                temperature,
                trial_index,
                answers: row.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    /// Party-major, then temperature, then trial.
    pub samples: Vec<SyntheticSample>,
    /// One record per request, in the same order as the cells.
    pub fixtures: Vec<FixtureRecord>,
    /// Cells whose transport gave up after all retries.
    pub failed_cells: usize,
}

struct Cell {
    sample: usize,
    key: CellKey,
    request: ChatRequest,
}

fn call_with_retries(transport: &dyn Transport, cell: &Cell, cfg: &LlmConfig) -> Result<String, TransportError> {
    let mut delay = cfg.backoff_initial;
    let mut attempt = 0;
    loop {
        match transport.complete(&cell.request, &cell.key) {
            Err(TransportError::Retryable(msg)) if attempt < cfg.max_retries => {
                log::warn!("retrying {} q{} after error: {msg}", cell.key.party, cell.key.question_id);
                std::thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Asks the transport to answer every question for each party, temperature and trial.
///
/// Up to `base.concurrency` requests run at once; results are assembled by
/// cell, so output order never depends on scheduling. Authentication failures
/// abort the run; other failures after retries leave the cell missing.
pub fn generate_dataset(
    base: &LlmConfig,
    parties: &[String],
    questionnaire: &Questionnaire,
    reps_per_temperature: usize,
    temperatures: &[f64],
    transport: &dyn Transport,
) -> Result<GeneratedDataset> {
    base.validate()?;
    if parties.is_empty() || temperatures.is_empty() || reps_per_temperature == 0 {
        return Err(Error::Config("need at least one party, temperature and repetition".into()));
    }
    if let Some(t) = temperatures.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Config(format!("temperature must be positive, got {t}")));
    }

    let mut samples = Vec::new();
    let mut cells = Vec::new();
    for party in parties {
        for &temperature in temperatures {
            for trial in 0..reps_per_temperature {
                let sample = samples.len();
                samples.push(SyntheticSample {
                    party: party.clone(),
                    temperature,
                    trial_index: trial,
                    answers: vec![None; questionnaire.len()],
                });
                for q in questionnaire.questions() {
                    let (system, user) = build_prompts(party, &q.text)?;
                    cells.push(Cell {
                        sample,
                        key: CellKey {
                            party: party.clone(),
                            question_id: q.id,
                            temperature,
                            trial,
                        },
                        request: ChatRequest {
                            model: base.model_name.clone(),
                            messages: vec![
                                ChatMessage { role: "system".into(), content: system },
                                ChatMessage { role: "user".into(), content: user },
                            ],
                            temperature,
                        },
                    });
                }
            }
        }
    }

    let replies: Mutex<Vec<Option<Result<String, TransportError>>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..base.concurrency.min(cells.len()) {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let reply = call_with_retries(transport, cell, base);
                if matches!(reply, Err(TransportError::Auth(_))) {
                    abort.store(true, Ordering::Relaxed);
                }
                replies.lock().expect("reply lock poisoned")[i] = Some(reply);
            });
        }
    });

    let replies = replies.into_inner().expect("reply lock poisoned");
    if let Some(Some(Err(TransportError::Auth(msg)))) = replies.iter().find(|r| matches!(r, Some(Err(TransportError::Auth(_))))) {
        return Err(Error::Auth(msg.clone()));
    }

    let mut fixtures = Vec::with_capacity(cells.len());
    let mut failed_cells = 0;
    for (cell, reply) in cells.into_iter().zip(replies) {
        let response = match reply.expect("every cell was attempted") {
            Ok(text) => Some(text),
            Err(e) => {
                log::warn!("{} q{} T={} trial {}: {e}", cell.key.party, cell.key.question_id, cell.key.temperature, cell.key.trial);
                failed_cells += 1;
                None
            }
        };
        let parsed = response.as_deref().and_then(parse_llm_reply);
        samples[cell.sample].answers[cell.key.question_id] = parsed;
        fixtures.push(FixtureRecord {
            party: cell.key.party,
            question_id: cell.key.question_id,
            temperature: cell.key.temperature,
            trial: cell.key.trial,
            request: cell.request,
            response,
            parsed,
        });
    }
    Ok(GeneratedDataset {
        samples,
        fixtures,
        failed_cells,
    })
}
