//! Python bindings: questionnaires, response matrices, model fitting, live
//! adaptive sessions and the simulation harness.

use adaptive_survey_core::latent::{embed_user, fit_model, impute, predict_all, LatentPoint, PosteriorTracker, TrainedModel};
use adaptive_survey_core::metrics::{self, complete_candidates, nearest_candidates, MetricKind};
use adaptive_survey_core::planted::{PlantedConfig, PlantedWorld};
use adaptive_survey_core::seed::substream;
use adaptive_survey_core::selection::{next_question, UserSessionState};
use adaptive_survey_core::simulation::{self, run_simulation, InitCondition, SimulationConfig};
use adaptive_survey_core::survey::{self, Answer, Respondent, RespondentKind};
use adaptive_survey_core::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Load { .. } | Error::Input(_) | Error::Config(_) | Error::Json(_) | Error::Csv(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

#[pyclass(name = "Questionnaire", frozen)]
struct PyQuestionnaire {
    inner: survey::Questionnaire,
}

#[pymethods]
impl PyQuestionnaire {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: survey::load_questionnaire(path).map_err(to_py)? })
    }

    #[staticmethod]
    fn uniform(n: usize, levels: usize) -> PyResult<Self> {
        Ok(Self { inner: survey::Questionnaire::uniform(n, levels).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn levels(&self, question: usize) -> PyResult<usize> {
        self.inner
            .get(question)
            .map(|q| q.levels)
            .ok_or_else(|| PyValueError::new_err(format!("no question {question}")))
    }

    #[getter]
    fn texts(&self) -> Vec<String> {
        self.inner.questions().iter().map(|q| q.text.clone()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
}

#[pyclass(name = "ResponseMatrix", frozen)]
struct PyResponseMatrix {
    inner: survey::ResponseMatrix,
}

#[pymethods]
impl PyResponseMatrix {
    /// `kind` is one of candidate, voter, synthetic.
    #[staticmethod]
    fn load(path: &str, questionnaire: &PyQuestionnaire, kind: &str) -> PyResult<Self> {
        let kind: RespondentKind = parse(kind)?;
        Ok(Self { inner: survey::load_responses(path, &questionnaire.inner, kind).map_err(to_py)? })
    }

    /// Builds a matrix from normalized answers; `None` marks a missing answer.
    #[staticmethod]
    #[pyo3(signature = (rows, kind = "synthetic", ids = None, parties = None))]
    fn from_rows(rows: Vec<Vec<Answer>>, kind: &str, ids: Option<Vec<String>>, parties: Option<Vec<Option<String>>>) -> PyResult<Self> {
        let kind: RespondentKind = parse(kind)?;
        let n_q = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let ids = ids.unwrap_or_else(|| (0..n).map(|i| format!("row-{i}")).collect());
        let parties = parties.unwrap_or_else(|| vec![None; n]);
        if ids.len() != n || parties.len() != n {
            return Err(PyValueError::new_err("ids and parties must have one entry per row"));
        }
        let respondents = ids.into_iter().zip(parties).map(|(id, party)| Respondent { id, kind, party }).collect();
        Ok(Self { inner: survey::ResponseMatrix::new(n_q, respondents, rows).map_err(to_py)? })
    }

    fn save(&self, path: &str, questionnaire: &PyQuestionnaire) -> PyResult<()> {
        survey::save_responses(path, &self.inner, &questionnaire.inner).map_err(to_py)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_questions(&self) -> usize {
        self.inner.n_questions()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn rows(&self) -> Vec<Vec<Answer>> {
        self.inner.rows().to_vec()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.respondents().iter().map(|r| r.id.clone()).collect()
    }

    fn parties(&self) -> Vec<Option<String>> {
        self.inner.respondents().iter().map(|r| r.party.clone()).collect()
    }
}

#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    /// Fits on `training`; too little data yields a random model.
    #[staticmethod]
    #[pyo3(signature = (training, questionnaire, seed = 0))]
    fn fit(training: &PyResponseMatrix, questionnaire: &PyQuestionnaire, seed: u64) -> Self {
        let mut rng = substream(seed, "fit", &[0]);
        Self { inner: fit_model(&training.inner, &questionnaire.inner, &mut rng) }
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedModel::from_json(s).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn n_questions(&self) -> usize {
        self.inner.n_questions()
    }

    #[getter]
    fn init_mode(&self) -> String {
        format!("{:?}", self.inner.init_mode()).to_lowercase()
    }

    /// Agreement probability of every question at `(x, y)`.
    fn predict(&self, x: f64, y: f64) -> Vec<f64> {
        predict_all(LatentPoint::new(x, y), &self.inner)
    }

    /// Posterior-mean position given `(question, value)` answers.
    #[pyo3(signature = (answers, resolution = 101))]
    fn embed(&self, answers: Vec<(usize, f64)>, resolution: usize) -> PyResult<(f64, f64)> {
        check_answers(&answers, &self.inner)?;
        let (p, _) = embed_user(&answers, &self.inner, resolution);
        Ok((p.x, p.y))
    }

    /// Full answer vector: given answers kept, the rest predicted.
    #[pyo3(signature = (answers, resolution = 101))]
    fn impute(&self, answers: Vec<(usize, f64)>, resolution: usize) -> PyResult<Vec<f64>> {
        check_answers(&answers, &self.inner)?;
        Ok(impute(&answers, &self.inner, resolution))
    }
}

fn check_answers(answers: &[(usize, f64)], model: &TrainedModel) -> PyResult<()> {
    match answers.iter().find(|(q, v)| *q >= model.n_questions() || !(0.0..=1.0).contains(v)) {
        Some((q, v)) => Err(PyValueError::new_err(format!("answer ({q}, {v}) out of range"))),
        None => Ok(()),
    }
}

/// A single respondent's adaptive questionnaire against a fixed model.
#[pyclass(name = "Session")]
struct PySession {
    model: TrainedModel,
    state: UserSessionState,
    tracker: PosteriorTracker,
    k: usize,
    served: Option<usize>,
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (model, k = 30, resolution = 101))]
    fn new(model: &PyModel, k: usize, resolution: usize) -> PyResult<Self> {
        let model = model.inner.clone();
        if k == 0 || k > model.n_questions() {
            return Err(PyValueError::new_err(format!("k must be in 1..={}", model.n_questions())));
        }
        if resolution < 2 {
            return Err(PyValueError::new_err("resolution must be at least 2"));
        }
        let state = UserSessionState::new(model.n_questions());
        let tracker = PosteriorTracker::new(&model, resolution);
        let served = Some(next_question(&state, &model).map_err(to_py)?);
        Ok(Self { model, state, tracker, k, served })
    }

    /// The question to answer next, `None` once `k` answers are in.
    #[getter]
    fn next_question(&self) -> Option<usize> {
        self.served
    }

    /// Records a normalized answer to the served question and returns the next one.
    fn answer(&mut self, question: usize, value: f64) -> PyResult<Option<usize>> {
        if self.served != Some(question) {
            return Err(PyValueError::new_err(format!("question {question} was not served (served: {:?})", self.served)));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(PyValueError::new_err(format!("answer {value} outside [0, 1]")));
        }
        self.state.record(question, value).map_err(to_py)?;
        self.tracker.observe(&self.model, question, value);
        self.state.set_point(self.tracker.mean());
        let done = self.state.answered().len() >= self.k || self.state.remaining().is_empty();
        self.served = if done { None } else { Some(next_question(&self.state, &self.model).map_err(to_py)?) };
        Ok(self.served)
    }

    #[getter]
    fn answered(&self) -> Vec<(usize, f64)> {
        self.state.answered().to_vec()
    }

    #[getter]
    fn point(&self) -> (f64, f64) {
        let p = self.state.current_point();
        (p.x, p.y)
    }

    fn imputed(&self) -> Vec<f64> {
        adaptive_survey_core::latent::impute_at(self.state.current_point(), self.state.answered(), &self.model)
    }

    /// Nearest candidates to the imputed profile: `(id, party, distance)`.
    #[pyo3(signature = (candidates, k = 36))]
    fn recommend(&self, candidates: &PyResponseMatrix, k: usize) -> PyResult<Vec<(String, Option<String>, f64)>> {
        recommend(self.imputed(), candidates, k)
    }
}

/// Maps a raw Likert index onto [0, 1].
#[pyfunction]
fn normalize_likert(raw_index: usize, levels: usize) -> PyResult<f64> {
    survey::normalize_likert(raw_index, levels).map_err(to_py)
}

/// The `k` candidates nearest to a complete answer vector by Manhattan distance.
#[pyfunction]
#[pyo3(signature = (answers, candidates, k = 36))]
fn recommend(answers: Vec<f64>, candidates: &PyResponseMatrix, k: usize) -> PyResult<Vec<(String, Option<String>, f64)>> {
    if answers.len() != candidates.inner.n_questions() {
        return Err(PyValueError::new_err("answer vector length differs from the candidate matrix"));
    }
    let rows = complete_candidates(&candidates.inner);
    Ok(nearest_candidates(&answers, &rows, k)
        .into_iter()
        .map(|(i, d)| {
            let r = &candidates.inner.respondents()[i];
            (r.id.clone(), r.party.clone(), d)
        })
        .collect())
}

/// One simulated run; returns per-user curves and the interaction log.
#[pyfunction]
#[pyo3(signature = (
    voters, candidates, questionnaire, init = None, condition = "coldstart", k = 30, u = 5, gamma = 0.0,
    n_users = 1000, seed = 0, grid_resolution = 101, k_neighbours = 36
))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    voters: &PyResponseMatrix,
    candidates: &PyResponseMatrix,
    questionnaire: &PyQuestionnaire,
    init: Option<&PyResponseMatrix>,
    condition: &str,
    k: usize,
    u: usize,
    gamma: f64,
    n_users: usize,
    seed: u64,
    grid_resolution: usize,
    k_neighbours: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let condition: InitCondition = parse(condition)?;
    let config = SimulationConfig {
        k,
        u,
        gamma,
        n_users,
        repetitions: 1,
        seed,
        init_condition: condition,
        grid_resolution,
        k_neighbours,
    };
    let init = match (condition, init) {
        (InitCondition::Candidates, None) => candidates.inner.clone(),
        (_, Some(m)) => m.inner.clone(),
        (_, None) => survey::ResponseMatrix::empty(questionnaire.inner.len()),
    };
    let result = run_simulation(&config, &voters.inner, &candidates.inner, &init, &questionnaire.inner).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("rmse", result.per_user_rmse)?;
    out.set_item("cra", result.per_user_cra)?;
    out.set_item("user_order", result.user_order)?;
    out.set_item("refit_count", result.refit_count)?;
    out.set_item("synthetic_after_refit", result.synthetic_after_refit)?;
    out.set_item("stopped_early", result.stopped_early)?;
    let log: Vec<(usize, usize, f64)> = result.interaction_log.iter().map(|r| (r.user_index, r.question_id, r.value)).collect();
    out.set_item("interactions", log)?;
    Ok(out)
}

/// Synthetic world with known latent positions: questionnaire, candidates, voters and vote shares.
#[pyfunction]
#[pyo3(signature = (seed = 0, n_questions = 30, n_parties = 6, candidates_per_party = 30, n_voters = 1200))]
fn planted_world(
    py: Python<'_>,
    seed: u64,
    n_questions: usize,
    n_parties: usize,
    candidates_per_party: usize,
    n_voters: usize,
) -> PyResult<Bound<'_, PyDict>> {
    let cfg = PlantedConfig { seed, n_questions, n_parties, candidates_per_party, n_voters, ..PlantedConfig::default() };
    let world = PlantedWorld::generate(&cfg).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("questionnaire", PyQuestionnaire { inner: world.questionnaire })?;
    out.set_item("candidates", PyResponseMatrix { inner: world.candidates })?;
    out.set_item("voters", PyResponseMatrix { inner: world.voters })?;
    let shares: Vec<(String, f64)> = world.vote_shares.parties().iter().map(|p| (p.clone(), world.vote_shares.shares[p])).collect();
    out.set_item("vote_shares", shares)?;
    Ok(out)
}

/// Welch's t-test; returns `(t, df, p)` with `p` one-sided for `mean(a) < mean(b)`.
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let r = metrics::welch_t_test(&a, &b).map_err(to_py)?;
    Ok((r.t, r.df, r.p_less))
}

/// First 1-based user from which the smoothed cold-start curve catches up, or `None`.
#[pyfunction]
#[pyo3(signature = (coldstart, pretrained, metric = "rmse", window = 50, persistence = 20))]
fn break_even(coldstart: Vec<f64>, pretrained: Vec<f64>, metric: &str, window: usize, persistence: usize) -> PyResult<Option<usize>> {
    let metric = match metric {
        "rmse" => MetricKind::Rmse,
        "cra" => MetricKind::Cra,
        other => return Err(PyValueError::new_err(format!("metric must be rmse or cra, got {other:?}"))),
    };
    Ok(metrics::break_even(&coldstart, &pretrained, metric, window, persistence).map_err(to_py)?.n)
}

/// Users after which every initial synthetic row has been removed.
#[pyfunction]
fn full_replacement_users(init_size: usize, gamma: f64, u: usize) -> Option<usize> {
    simulation::full_replacement_users(init_size, gamma, u)
}

#[pymodule]
fn adaptive_survey(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuestionnaire>()?;
    m.add_class::<PyResponseMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(normalize_likert, m)?)?;
    m.add_function(wrap_pyfunction!(recommend, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(planted_world, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(break_even, m)?)?;
    m.add_function(wrap_pyfunction!(full_replacement_users, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
