//! Synchronous service state: sessions, the shared model and the refit worker.
//!
//! The HTTP layer is a thin wrapper over [`Engine`]; everything here can be
//! driven directly, which is how restart replay works.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, RwLock, Weak};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use adaptive_survey_core::latent::{fit_model, impute_at, InitMode, LatentPoint, PosteriorTracker, TrainedModel};
use adaptive_survey_core::metrics::{complete_candidates, nearest_candidates};
use adaptive_survey_core::seed::substream;
use adaptive_survey_core::selection::{next_question, UserSessionState};
use adaptive_survey_core::simulation::TrainingPool;
use adaptive_survey_core::survey::{normalize_likert, Answer, Question, Questionnaire, ResponseMatrix};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ServiceError};
use crate::events::{read_events, Event, EventLog, SessionStatus};

pub const EVENT_LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "model.json";

/// A model together with the refit that produced it (0 for the initial model).
#[derive(Debug)]
pub struct ServingModel {
    pub version: usize,
    pub model: TrainedModel,
}

#[derive(Clone)]
struct Session {
    id: String,
    model: Arc<ServingModel>,
    state: UserSessionState,
    tracker: PosteriorTracker,
    k: usize,
    served: Option<usize>,
    status: SessionStatus,
    created: DateTime<Utc>,
    updated: DateTime<Utc>,
}

impl Session {
    fn row(&self, n_questions: usize) -> Vec<Answer> {
        let mut row = vec![None; n_questions];
        for &(q, v) in self.state.answered() {
            row[q] = Some(v);
        }
        row
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuestionView {
    pub id: usize,
    pub text: String,
    pub levels: usize,
}

impl From<&Question> for QuestionView {
    fn from(q: &Question) -> Self {
        Self { id: q.id, text: q.text.clone(), levels: q.levels }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateMatch {
    pub id: String,
    pub party: Option<String>,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Recommendations {
    pub candidates: Vec<CandidateMatch>,
    pub imputed_profile: Vec<f64>,
    /// Set when more candidates were requested than exist.
    pub truncated: bool,
    pub position: LatentPoint,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub question: QuestionView,
    pub k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnswerOutcome {
    pub session_id: String,
    pub status: SessionStatus,
    pub answered: usize,
    /// `None` once the session is complete.
    pub next_question: Option<QuestionView>,
    pub recommendations: Vec<CandidateMatch>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: SessionStatus,
    pub k: usize,
    pub answered: Vec<AnsweredView>,
    pub next_question: Option<QuestionView>,
    pub position: LatentPoint,
    pub model_version: usize,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnsweredView {
    pub question_id: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TrainingRows {
    pub real: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub init_mode: InitMode,
    pub refit_count: usize,
    pub training_rows: TrainingRows,
    pub pending_refits: usize,
    pub sessions_awaiting_refit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Ok,
    Degraded,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    refit_count: usize,
    model: TrainedModel,
}

struct RefitJob {
    refit: usize,
    batch: Vec<(String, Vec<Answer>)>,
}

/// Closed sessions waiting for the next refit, and refits handed to the worker.
struct Batching {
    closed: Vec<(String, Vec<Answer>)>,
    scheduled: usize,
    pending_since: VecDeque<Instant>,
}

struct Worker {
    sender: Mutex<Option<Sender<RefitJob>>>,
    handle: Mutex<Option<JoinHandle<()>>>,
    held: Mutex<bool>,
    held_cv: Condvar,
}

pub struct Engine {
    config: ServiceConfig,
    questionnaire: Questionnaire,
    questionnaire_json: String,
    candidates: ResponseMatrix,
    candidate_rows: Vec<Vec<f64>>,
    session_k: usize,
    model: RwLock<Arc<ServingModel>>,
    pool: Mutex<TrainingPool>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    batching: Mutex<Batching>,
    refits_done: Mutex<usize>,
    refits_cv: Condvar,
    log: EventLog,
    worker: Worker,
}

fn state_error(e: ServiceError) -> ApiError {
    log::error!("{e}");
    ApiError::internal(e.to_string())
}

impl Engine {
    /// Builds the engine, replaying any event log in `config.state_dir`, and starts the refit worker.
    ///
    /// `questionnaire_json` is served verbatim by `GET /v1/questions`. `init`
    /// holds the synthetic rows the first model is fitted on; `None` starts
    /// from a random model.
    pub fn start(
        config: ServiceConfig,
        questionnaire: Questionnaire,
        questionnaire_json: String,
        candidates: ResponseMatrix,
        init: Option<ResponseMatrix>,
    ) -> Result<Arc<Self>, ServiceError> {
        config.validate()?;
        let q = questionnaire.len();
        if candidates.is_empty() || candidates.n_questions() != q {
            return Err(ServiceError::Config(format!(
                "candidate matrix must be non-empty with {q} questions"
            )));
        }
        let init = init.unwrap_or_else(|| ResponseMatrix::empty(q));
        if init.n_questions() != q {
            return Err(ServiceError::Config(format!("initial training data has {} questions, expected {q}", init.n_questions())));
        }
        let pool = TrainingPool::new(&init);
        let model = fit_model(&pool.to_matrix(), &questionnaire, &mut substream(config.seed, "fit", &[0]));
        let (sender, receiver) = mpsc::channel();
        let candidate_rows = complete_candidates(&candidates);
        let state_dir = config.state_dir.clone();
        let mut engine = Self {
            session_k: config.session_k.min(q),
            questionnaire,
            questionnaire_json,
            candidates,
            candidate_rows,
            model: RwLock::new(Arc::new(ServingModel { version: 0, model })),
            pool: Mutex::new(pool),
            sessions: Mutex::new(HashMap::new()),
            batching: Mutex::new(Batching { closed: Vec::new(), scheduled: 0, pending_since: VecDeque::new() }),
            refits_done: Mutex::new(0),
            refits_cv: Condvar::new(),
            log: EventLog::in_memory(),
            worker: Worker {
                sender: Mutex::new(Some(sender)),
                handle: Mutex::new(None),
                held: Mutex::new(false),
                held_cv: Condvar::new(),
            },
            config,
        };
        if let Some(dir) = state_dir {
            std::fs::create_dir_all(&dir)?;
            engine.replay(&dir)?;
            engine.log = EventLog::open(&dir.join(EVENT_LOG_FILE))?;
        }
        let engine = Arc::new(engine);
        let weak = Arc::downgrade(&engine);
        let handle = std::thread::Builder::new()
            .name("refit-worker".into())
            .spawn(move || refit_loop(weak, receiver))?;
        *engine.worker.handle.lock().unwrap() = Some(handle);
        Ok(engine)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn questionnaire(&self) -> &Questionnaire {
        &self.questionnaire
    }

    pub fn questionnaire_json(&self) -> &str {
        &self.questionnaire_json
    }

    pub fn current_model(&self) -> Arc<ServingModel> {
        self.model.read().unwrap().clone()
    }

    fn question_view(&self, id: usize) -> QuestionView {
        QuestionView::from(&self.questionnaire.questions()[id])
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
    }

    fn oldest_pending(&self) -> Option<Duration> {
        self.batching.lock().unwrap().pending_since.front().map(|t| t.elapsed())
    }

    pub fn health(&self) -> Health {
        match self.oldest_pending() {
            Some(age) if age > self.config.staleness_budget() => Health::Degraded,
            _ => Health::Ok,
        }
    }

    pub fn create_session(&self) -> Result<SessionCreated, ApiError> {
        if self.health() == Health::Degraded {
            return Err(ApiError::unavailable("model refit is overdue; try again shortly"));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let now = Utc::now();
        let model = self.current_model();
        let session = self.open_session(id.clone(), model, now).map_err(state_error)?;
        let served = session.served.expect("fresh session has a question");
        self.log
            .append(&Event::SessionStarted { session_id: id.clone(), at: now, k: session.k, served, model_version: session.model.version })
            .map_err(state_error)?;
        let k = session.k;
        self.sessions.lock().unwrap().insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(SessionCreated { session_id: id, question: self.question_view(served), k })
    }

    fn open_session(&self, id: String, model: Arc<ServingModel>, now: DateTime<Utc>) -> Result<Session, ServiceError> {
        let state = UserSessionState::new(self.questionnaire.len());
        let tracker = PosteriorTracker::new(&model.model, self.config.grid_resolution);
        let served = next_question(&state, &model.model)?;
        Ok(Session {
            id,
            model,
            state,
            tracker,
            k: self.session_k,
            served: Some(served),
            status: SessionStatus::Active,
            created: now,
            updated: now,
        })
    }

    pub fn answer(&self, session_id: &str, question_id: usize, raw_index: usize, finish: bool) -> Result<AnswerOutcome, ApiError> {
        let handle = self.session(session_id)?;
        let mut session = handle.lock().unwrap();
        if session.status != SessionStatus::Active {
            return Err(ApiError::conflict(format!("session is {:?}", session.status).to_lowercase()));
        }
        if session.served != Some(question_id) {
            return Err(ApiError::conflict(format!(
                "question {question_id} is not the one served (expected {:?})",
                session.served
            )));
        }
        let levels = self.questionnaire.questions()[question_id].levels;
        let value = normalize_likert(raw_index, levels)
            .map_err(|_| ApiError::invalid(format!("raw_index {raw_index} out of range for {levels} levels")))?;
        let now = Utc::now();
        // Work on a copy so a failed log write leaves the session untouched.
        let mut next = session.clone();
        let closes = self.advance(&mut next, question_id, value, finish).map_err(state_error)?;
        self.log
            .append(&Event::Answered {
                session_id: next.id.clone(),
                at: now,
                question_id,
                raw_index,
                value,
                served: next.served,
            })
            .map_err(state_error)?;
        next.updated = now;
        *session = next;
        if closes {
            self.close(&mut session, SessionStatus::Completed, now).map_err(state_error)?;
        }
        let preview = self.recommend(&session, self.config.preview).candidates;
        Ok(AnswerOutcome {
            session_id: session.id.clone(),
            status: session.status,
            answered: session.state.answered().len(),
            next_question: session.served.map(|q| self.question_view(q)),
            recommendations: preview,
        })
    }

    /// Records an answer, re-embeds and picks the next question. Returns whether the session is done.
    fn advance(&self, session: &mut Session, question: usize, value: f64, finish: bool) -> Result<bool, ServiceError> {
        let model = session.model.clone();
        session.state.record(question, value)?;
        session.tracker.observe(&model.model, question, value);
        let point = session.tracker.mean();
        session.state.set_point(point);
        let done = finish || session.state.answered().len() >= session.k || session.state.remaining().is_empty();
        session.served = if done { None } else { Some(next_question(&session.state, &model.model)?) };
        Ok(done)
    }

    /// Marks a session closed and queues its answers for the next refit.
    fn close(&self, session: &mut Session, status: SessionStatus, now: DateTime<Utc>) -> Result<(), ServiceError> {
        let mut batching = self.batching.lock().unwrap();
        self.log.append(&Event::SessionClosed { session_id: session.id.clone(), at: now, status })?;
        session.status = status;
        session.served = None;
        session.updated = now;
        // A session that never answered anything carries no training signal.
        if session.state.answered().is_empty() {
            return Ok(());
        }
        batching.closed.push((session.id.clone(), session.row(self.questionnaire.len())));
        if batching.closed.len() >= self.config.u {
            let batch: Vec<_> = batching.closed.drain(..).collect();
            batching.scheduled += 1;
            let refit = batching.scheduled;
            let sessions = batch.iter().map(|(id, _)| id.clone()).collect();
            self.log.append(&Event::RefitScheduled { refit, at: now, sessions })?;
            batching.pending_since.push_back(Instant::now());
            if let Some(sender) = self.worker.sender.lock().unwrap().as_ref() {
                // The worker only disappears when the engine is being dropped.
                let _ = sender.send(RefitJob { refit, batch });
            }
        }
        Ok(())
    }

    fn recommend(&self, session: &Session, k: usize) -> Recommendations {
        let point = session.state.current_point();
        let imputed = impute_at(point, session.state.answered(), &session.model.model);
        let candidates = nearest_candidates(&imputed, &self.candidate_rows, k)
            .into_iter()
            .map(|(i, distance)| {
                let r = &self.candidates.respondents()[i];
                CandidateMatch { id: r.id.clone(), party: r.party.clone(), distance }
            })
            .collect();
        Recommendations { candidates, imputed_profile: imputed, truncated: k > self.candidate_rows.len(), position: point }
    }

    pub fn recommendations(&self, session_id: &str) -> Result<Recommendations, ApiError> {
        let handle = self.session(session_id)?;
        let session = handle.lock().unwrap();
        if session.state.answered().is_empty() {
            return Err(ApiError::conflict("no answers yet"));
        }
        Ok(self.recommend(&session, self.config.k_neighbours))
    }

    pub fn session_view(&self, session_id: &str) -> Result<SessionView, ApiError> {
        let handle = self.session(session_id)?;
        let s = handle.lock().unwrap();
        Ok(SessionView {
            session_id: s.id.clone(),
            status: s.status,
            k: s.k,
            answered: s.state.answered().iter().map(|&(question_id, value)| AnsweredView { question_id, value }).collect(),
            next_question: s.served.map(|q| self.question_view(q)),
            position: s.state.current_point(),
            model_version: s.model.version,
            created: s.created,
            updated: s.updated,
        })
    }

    /// Closes every active session idle for longer than the abandonment timeout. Returns how many closed.
    pub fn sweep_abandoned(&self, now: DateTime<Utc>) -> Result<usize, ServiceError> {
        let limit = chrono::Duration::from_std(self.config.abandon_after()).unwrap_or(chrono::Duration::MAX);
        let mut handles: Vec<_> = self.sessions.lock().unwrap().values().cloned().collect();
        // Deterministic close order keeps the batch composition reproducible.
        handles.sort_by_key(|h| {
            let s = h.lock().unwrap();
            (s.updated, s.id.clone())
        });
        let mut closed = 0;
        for h in handles {
            let mut s = h.lock().unwrap();
            if s.status == SessionStatus::Active && now - s.updated > limit {
                self.close(&mut s, SessionStatus::Abandoned, now)?;
                closed += 1;
            }
        }
        Ok(closed)
    }

    pub fn model_info(&self) -> ModelInfo {
        let model = self.current_model();
        let (real, synthetic) = {
            let pool = self.pool.lock().unwrap();
            (pool.real_count(), pool.synthetic_count())
        };
        let batching = self.batching.lock().unwrap();
        ModelInfo {
            init_mode: model.model.init_mode(),
            refit_count: model.version,
            training_rows: TrainingRows { real, synthetic },
            pending_refits: batching.pending_since.len(),
            sessions_awaiting_refit: batching.closed.len(),
        }
    }

    /// Rows currently in the training set with their origin, in pool order.
    pub fn training_rows(&self) -> Vec<(String, Vec<Answer>, adaptive_survey_core::simulation::Origin)> {
        self.pool.lock().unwrap().rows().map(|(id, row, o)| (id.to_string(), row.to_vec(), o)).collect()
    }

    /// Blocks until `n` refits have been swapped in or `timeout` passes; returns whether they were.
    pub fn wait_for_refits(&self, n: usize, timeout: Duration) -> bool {
        let done = self.refits_done.lock().unwrap();
        let (done, _) = self.refits_cv.wait_timeout_while(done, timeout, |d| *d < n).unwrap();
        *done >= n
    }

    /// Suspends (or resumes) the refit worker; scheduled refits queue up meanwhile.
    pub fn hold_refits(&self, hold: bool) {
        *self.worker.held.lock().unwrap() = hold;
        self.worker.held_cv.notify_all();
    }

    fn run_refit(&self, job: RefitJob) -> Result<(), ServiceError> {
        let training = {
            let mut pool = self.pool.lock().unwrap();
            pool.apply_batch(job.batch, self.config.gamma, self.config.u, &mut substream(self.config.seed, "removal", &[job.refit as u64]));
            pool.to_matrix()
        };
        let model = fit_model(&training, &self.questionnaire, &mut substream(self.config.seed, "fit", &[job.refit as u64]));
        let serving = Arc::new(ServingModel { version: job.refit, model });
        if let Some(dir) = &self.config.state_dir {
            write_snapshot(dir, &serving)?;
        }
        *self.model.write().unwrap() = serving;
        self.batching.lock().unwrap().pending_since.pop_front();
        *self.refits_done.lock().unwrap() = job.refit;
        self.refits_cv.notify_all();
        log::info!("refit {} swapped in ({} training rows)", job.refit, training.n_rows());
        Ok(())
    }

    /// Rebuilds sessions, the training pool and the model from the event log.
    fn replay(&mut self, dir: &std::path::Path) -> Result<(), ServiceError> {
        let events = read_events(&dir.join(EVENT_LOG_FILE))?;
        if events.is_empty() {
            return Ok(());
        }
        let snapshot = read_snapshot(dir)?;
        let last_refit = events
            .iter()
            .filter_map(|e| match e {
                Event::RefitScheduled { refit, .. } => Some(*refit),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut models: BTreeMap<usize, Arc<ServingModel>> = BTreeMap::new();
        models.insert(0, self.current_model());
        let mut sessions: HashMap<String, Session> = HashMap::new();
        let mut closed: Vec<(String, Vec<Answer>)> = Vec::new();
        let q = self.questionnaire.len();
        let corrupt = |m: String| ServiceError::Persistence(format!("event log replay: {m}"));
        for event in events {
            match event {
                Event::SessionStarted { session_id, at, k, served, model_version } => {
                    let model = models
                        .get(&model_version)
                        .cloned()
                        .ok_or_else(|| corrupt(format!("session {session_id} uses unknown model {model_version}")))?;
                    let mut s = self.open_session(session_id.clone(), model, at)?;
                    s.k = k;
                    if s.served != Some(served) {
                        return Err(corrupt(format!("session {session_id} first question differs")));
                    }
                    sessions.insert(session_id, s);
                }
                Event::Answered { session_id, at, question_id, value, served, .. } => {
                    let s = sessions.get_mut(&session_id).ok_or_else(|| corrupt(format!("unknown session {session_id}")))?;
                    self.advance(s, question_id, value, served.is_none())?;
                    if s.served != served {
                        return Err(corrupt(format!("session {session_id} diverged after question {question_id}")));
                    }
                    s.updated = at;
                }
                Event::SessionClosed { session_id, at, status } => {
                    let s = sessions.get_mut(&session_id).ok_or_else(|| corrupt(format!("unknown session {session_id}")))?;
                    s.status = status;
                    s.served = None;
                    s.updated = at;
                    if !s.state.answered().is_empty() {
                        closed.push((session_id, s.row(q)));
                    }
                }
                Event::RefitScheduled { refit, sessions: ids, .. } => {
                    let batch: Vec<_> = closed.drain(..).collect();
                    if batch.iter().map(|(id, _)| id).ne(ids.iter()) {
                        return Err(corrupt(format!("refit {refit} batch does not match closed sessions")));
                    }
                    let training = {
                        let pool = self.pool.get_mut().unwrap();
                        pool.apply_batch(batch, self.config.gamma, self.config.u, &mut substream(self.config.seed, "removal", &[refit as u64]));
                        pool.to_matrix()
                    };
                    let model = match &snapshot {
                        Some(s) if s.refit_count == refit && refit == last_refit => s.model.clone(),
                        _ => fit_model(&training, &self.questionnaire, &mut substream(self.config.seed, "fit", &[refit as u64])),
                    };
                    models.insert(refit, Arc::new(ServingModel { version: refit, model }));
                }
            }
        }
        let latest = models.values().next_back().cloned().expect("initial model present");
        *self.model.get_mut().unwrap() = latest.clone();
        *self.refits_done.get_mut().unwrap() = latest.version;
        let batching = self.batching.get_mut().unwrap();
        batching.closed = closed;
        batching.scheduled = last_refit;
        *self.sessions.get_mut().unwrap() = sessions.into_iter().map(|(id, s)| (id, Arc::new(Mutex::new(s)))).collect();
        if snapshot.as_ref().is_none_or(|s| s.refit_count != last_refit) && last_refit > 0 {
            write_snapshot(dir, &latest)?;
        }
        log::info!("replayed event log: {last_refit} refits, {} sessions", self.sessions.get_mut().unwrap().len());
        Ok(())
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.worker.sender.get_mut().unwrap().take();
        self.hold_refits(false);
        if let Some(h) = self.worker.handle.get_mut().unwrap().take() {
            // The worker may be the one dropping the last reference.
            if h.thread().id() != std::thread::current().id() {
                let _ = h.join();
            }
        }
    }
}

fn refit_loop(engine: Weak<Engine>, jobs: Receiver<RefitJob>) {
    while let Ok(job) = jobs.recv() {
        let Some(engine) = engine.upgrade() else { return };
        {
            let held = engine.worker.held.lock().unwrap();
            let _unused = engine.worker.held_cv.wait_while(held, |h| *h).unwrap();
        }
        let refit = job.refit;
        if let Err(e) = engine.run_refit(job) {
            log::error!("refit {refit} failed: {e}");
        }
    }
}

fn snapshot_path(dir: &std::path::Path) -> PathBuf {
    dir.join(SNAPSHOT_FILE)
}

fn write_snapshot(dir: &std::path::Path, model: &ServingModel) -> Result<(), ServiceError> {
    let snap = Snapshot { refit_count: model.version, model: model.model.clone() };
    let json = serde_json::to_string(&snap).map_err(|e| ServiceError::Persistence(e.to_string()))?;
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    std::fs::write(&tmp, json)?;
    std::fs::rename(tmp, snapshot_path(dir))?;
    Ok(())
}

fn read_snapshot(dir: &std::path::Path) -> Result<Option<Snapshot>, ServiceError> {
    let path = snapshot_path(dir);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    match serde_json::from_str(&text) {
        Ok(s) => Ok(Some(s)),
        Err(e) => {
            log::warn!("ignoring unreadable snapshot {}: {e}", path.display());
            Ok(None)
        }
    }
}
